//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl QuadConfig {
    pub fn for_type<T: Real>() -> Self {
        QuadConfig {
            abs_tol: T::QUAD_TOL * 1e-3,
            rel_tol: T::QUAD_TOL,
            max_intervals: 2000,
        }
    }

    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadConfig {
            abs_tol,
            rel_tol,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::c(0.5);
    let center = (a + b) * half;
    let h = (b - a) * half;
    let fc = f(center);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for k in 0..7 {
        let dx = h * T::c(XGK[k]);
        let s = f(center - dx) + f(center + dx);
        kronrod = kronrod + s * T::c(WGK[k]);
        if k % 2 == 1 {
            gauss = gauss + s * T::c(WG[k / 2]);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    cfg: QuadConfig,
) -> Result<QuadResult<T>> {
    if a == b {
        return Ok(QuadResult {
            value: T::zero(),
            error: T::zero(),
            intervals: 0,
        });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut segs = vec![Segment {
        a,
        b,
        value: v,
        error: e,
    }];
    let abs_tol = T::c(cfg.abs_tol);
    let rel_tol = T::c(cfg.rel_tol);
    loop {
        let total: T = segs.iter().map(|s| s.value).sum();
        let err: T = segs.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: segs.len(),
            });
        }
        if segs.len() >= cfg.max_intervals {
            return Err(Error::NonConvergence {
                function: "integrate",
                iterations: segs.len(),
                detail: format!("interval [{a}, {b}], estimate {total}, error {err}"),
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let s = segs.swap_remove(worst);
        let mid = (s.a + s.b) * T::c(0.5);
        if !(mid > s.a && mid < s.b) {
            // interval cannot be split further in this precision
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: segs.len() + 1,
            });
        }
        let (v1, e1) = gk15(&mut f, s.a, mid);
        let (v2, e2) = gk15(&mut f, mid, s.b);
        segs.push(Segment {
            a: s.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segs.push(Segment {
            a: mid,
            b: s.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integrates `f` over `[a, ∞)` through the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    cfg: QuadConfig,
) -> Result<QuadResult<T>> {
    let one = T::one();
    integrate(
        |t: T| {
            let u = one - t;
            let x = a + t / u;
            let v = f(x) / (u * u);
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        T::zero(),
        one,
        cfg,
    )
}
