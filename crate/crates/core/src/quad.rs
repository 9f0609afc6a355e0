//! Filon-type quadrature for integrals of the form `int f(t) e^{i omega t} dt`
//! where `f` is sampled on a uniform grid and the exponential is integrated
//! exactly against a local polynomial interpolant of `f`.
//!
//! Frequencies may be complex, which is how transforms are continued off the
//! real `lambda` axis.

use crate::{C64, I};

/// `mu_p(theta) = int_0^1 v^p e^{i theta v} dv` for `p = 0, 1, 2`.
fn moments(theta: C64) -> [C64; 3] {
    if theta.norm() < 0.5 {
        // Power series; the closed form cancels badly here.
        let mut out = [C64::new(0.0, 0.0); 3];
        let z = I * theta;
        let mut term = C64::new(1.0, 0.0); // z^k / k!
        for k in 0..30 {
            for (p, o) in out.iter_mut().enumerate() {
                *o += term / (p + k + 1) as f64;
            }
            term = term * z / (k + 1) as f64;
            if term.norm() < 1e-18 {
                break;
            }
        }
        out
    } else {
        let z = I * theta;
        let e = z.exp();
        let m0 = (e - 1.0) / z;
        let m1 = (e - m0) / z;
        let m2 = (e - 2.0 * m1) / z;
        [m0, m1, m2]
    }
}

/// Weights for one interval `[0, h]` and for one pair of intervals `[0, 2h]`.
#[derive(Clone, Copy, Debug)]
pub struct FilonWeights {
    pub h: f64,
    pub omega: C64,
    /// Interval `[0,h]` integrated against the quadratic through nodes `0, h, 2h`.
    pub forward: [C64; 3],
    /// Interval `[0,h]` integrated against the quadratic through nodes `-h, 0, h`.
    pub backward: [C64; 3],
    /// Interval `[0,2h]` integrated against the quadratic through nodes `0, h, 2h`.
    pub pair: [C64; 3],
    /// Interval `[0,h]` integrated against the linear interpolant through `0, h`.
    pub linear: [C64; 2],
}

impl FilonWeights {
    pub fn new(omega: C64, h: f64) -> Self {
        let [m0, m1, m2] = moments(omega * h);
        let forward = [
            h * (m2 - 3.0 * m1 + 2.0 * m0) / 2.0,
            h * (2.0 * m1 - m2),
            h * (m2 - m1) / 2.0,
        ];
        let backward = [h * (m2 - m1) / 2.0, h * (m0 - m2), h * (m2 + m1) / 2.0];
        let linear = [h * (m0 - m1), h * m1];
        // Moments over [0, 2]: nu_p = 2^{p+1} mu_p(2 theta).
        let [q0, q1, q2] = moments(omega * 2.0 * h);
        let (n0, n1, n2) = (2.0 * q0, 4.0 * q1, 8.0 * q2);
        let pair = [
            h * (n2 - 3.0 * n1 + 2.0 * n0) / 2.0,
            h * (2.0 * n1 - n2),
            h * (n2 - n1) / 2.0,
        ];
        Self {
            h,
            omega,
            forward,
            backward,
            pair,
            linear,
        }
    }
}

/// `int_{t0}^{t0 + (len-1) h} f(t) e^{i omega t} dt` for samples `f[m] = f(t0 + m h)`.
///
/// Composite quadratic Filon rule on pairs of intervals; a trailing odd
/// interval uses the backward panel.
pub fn integrate(samples: &[C64], t0: f64, h: f64, omega: C64) -> C64 {
    integrate_with(samples, t0, &FilonWeights::new(omega, h))
}

/// [`integrate`] with precomputed weights.
pub fn integrate_with(samples: &[C64], t0: f64, w: &FilonWeights) -> C64 {
    let len = samples.len();
    if len < 2 {
        return C64::new(0.0, 0.0);
    }
    let (omega, h) = (w.omega, w.h);
    if len == 2 {
        return (I * omega * t0).exp() * (w.linear[0] * samples[0] + w.linear[1] * samples[1]);
    }
    let step = (I * omega * 2.0 * h).exp();
    let mut phase = (I * omega * t0).exp();
    let mut acc = C64::new(0.0, 0.0);
    let mut m = 0;
    let mut since_reset = 0;
    while m + 2 < len {
        acc += phase * (w.pair[0] * samples[m] + w.pair[1] * samples[m + 1] + w.pair[2] * samples[m + 2]);
        m += 2;
        since_reset += 1;
        if since_reset == 64 {
            phase = (I * omega * (t0 + m as f64 * h)).exp();
            since_reset = 0;
        } else {
            phase *= step;
        }
    }
    if m + 1 < len {
        // one interval left: [m, m+1] with nodes m-1, m, m+1
        let p = (I * omega * (t0 + m as f64 * h)).exp();
        acc += p * (w.backward[0] * samples[m - 1] + w.backward[1] * samples[m] + w.backward[2] * samples[m + 1]);
    }
    acc
}

/// Tail integrals `out[m] = int_{t_m}^{t_last} f(t) e^{i omega t} dt`.
///
/// Nodes an even number of intervals from the right end are reached by pair
/// panels only; the others start with one backward panel on the last interval.
pub fn cumulative_from_right(samples: &[C64], t0: f64, h: f64, weights: &FilonWeights) -> Vec<C64> {
    let len = samples.len();
    let mut out = vec![C64::new(0.0, 0.0); len];
    if len < 2 {
        return out;
    }
    let omega = weights.omega;
    let last = len - 1;
    if len == 2 {
        out[0] = (I * omega * t0).exp() * (weights.linear[0] * samples[0] + weights.linear[1] * samples[1]);
        return out;
    }
    let phase_at = |m: usize| (I * omega * (t0 + m as f64 * h)).exp();
    let step_back = (-I * omega * 2.0 * h).exp();
    let pair = |m: usize| weights.pair[0] * samples[m] + weights.pair[1] * samples[m + 1] + weights.pair[2] * samples[m + 2];
    // chain through last, last-2, ...
    let mut acc = C64::new(0.0, 0.0);
    let mut m = last;
    let mut phase = phase_at(last.saturating_sub(2));
    let mut count = 0;
    while m >= 2 {
        m -= 2;
        acc += phase * pair(m);
        out[m] = acc;
        count += 1;
        phase = if count % 32 == 0 && m >= 2 { phase_at(m - 2) } else { phase * step_back };
    }
    // chain through last-1, last-3, ...
    let b = &weights.backward;
    acc = phase_at(last - 1) * (b[0] * samples[last - 2] + b[1] * samples[last - 1] + b[2] * samples[last]);
    out[last - 1] = acc;
    let mut m = last - 1;
    let mut phase = phase_at(m.saturating_sub(2));
    count = 0;
    while m >= 2 {
        m -= 2;
        acc += phase * pair(m);
        out[m] = acc;
        count += 1;
        phase = if count % 32 == 0 && m >= 2 { phase_at(m - 2) } else { phase * step_back };
    }
    out
}

/// Cubic Lagrange interpolation of uniformly spaced `values` at fractional
/// index `pos` (clamped stencil at the ends).
pub fn interp_cubic(values: &[C64], pos: f64) -> C64 {
    let len = values.len();
    match len {
        0 => C64::new(0.0, 0.0),
        1 => values[0],
        2 | 3 => {
            let base = (pos.floor().max(0.0) as usize).min(len - 2);
            let f = pos - base as f64;
            values[base] * (1.0 - f) + values[base + 1] * f
        }
        _ => {
            let base = pos.floor() as isize;
            let start = (base - 1).clamp(0, len as isize - 4) as usize;
            let x = pos - start as f64;
            let nodes = [0.0, 1.0, 2.0, 3.0];
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..4 {
                let mut l = 1.0;
                for b in 0..4 {
                    if a != b {
                        l *= (x - nodes[b]) / (nodes[a] - nodes[b]);
                    }
                }
                acc += values[start + a] * l;
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_samples(rate: C64, h: f64, len: usize) -> Vec<C64> {
        (0..len).map(|m| (-rate * (m as f64 * h)).exp()).collect()
    }

    #[test]
    fn integrates_decaying_exponential_against_oscillation() {
        // int_0^L e^{-t/2} e^{i w t} dt = (1 - e^{-(1/2 - i w) L}) / (1/2 - i w)
        let h = 0.01;
        let len = 6001;
        let f = exp_samples(C64::new(0.5, 0.0), h, len);
        let l = h * (len - 1) as f64;
        for w in [0.0, 0.3, 7.0, 20.0, -40.0] {
            let z = C64::new(0.5, -w);
            let exact = (1.0 - (-z * l).exp()) / z;
            let got = integrate(&f, 0.0, h, C64::new(w, 0.0));
            assert!((got - exact).norm() < 1e-9, "w={w}: {got} vs {exact}");
        }
    }

    #[test]
    fn odd_sample_count_uses_backward_panel() {
        let h = 0.02;
        let f = exp_samples(C64::new(1.0, 0.0), h, 500);
        let l = h * 499.0;
        let z = C64::new(1.0, -3.0);
        let exact = (1.0 - (-z * l).exp()) / z;
        let got = integrate(&f, 0.0, h, C64::new(3.0, 0.0));
        assert!((got - exact).norm() < 1e-7, "{}", (got - exact).norm());
    }

    #[test]
    fn cumulative_matches_direct_tail_integrals() {
        let h = 0.02;
        let f = exp_samples(C64::new(0.7, 0.2), h, 400);
        let omega = C64::new(2.5, 0.0);
        let w = FilonWeights::new(omega, h);
        let cum = cumulative_from_right(&f, 1.0, h, &w);
        for m in [0usize, 17, 200, 397] {
            let t_m = 1.0 + m as f64 * h;
            let t_end = 1.0 + 399.0 * h;
            let z = C64::new(0.7, 0.2) - I * omega;
            // int_{t_m}^{t_end} e^{-0.7 (t-1) - 0.2 i (t-1)} e^{i w t} dt
            let exact = ((-(C64::new(0.7, 0.2)) * (t_m - 1.0) + I * omega * t_m).exp()
                - ((-(C64::new(0.7, 0.2))) * (t_end - 1.0) + I * omega * t_end).exp())
                / z;
            assert!((cum[m] - exact).norm() < 5e-9, "m={m} {}", (cum[m] - exact).norm());
        }
        assert_eq!(cum[399], C64::new(0.0, 0.0));
    }

    #[test]
    fn complex_frequency_continues_the_transform() {
        let h = 0.01;
        let f = exp_samples(C64::new(1.0, 0.0), h, 4001);
        let omega = C64::new(1.5, 0.3);
        let z = C64::new(1.0, 0.0) - I * omega;
        let exact = (1.0 - (-z * 40.0).exp()) / z;
        assert!((integrate(&f, 0.0, h, omega) - exact).norm() < 1e-9);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let vals: Vec<C64> = (0..10)
            .map(|m| {
                let x = m as f64;
                C64::new(x * x * x - 2.0 * x, x * x)
            })
            .collect();
        for pos in [0.0, 0.3, 4.7, 8.2, 9.0] {
            let exact = C64::new(pos * pos * pos - 2.0 * pos, pos * pos);
            assert!((interp_cubic(&vals, pos) - exact).norm() < 1e-10);
        }
    }
}
