//! Adaptive Dormand–Prince 5(4) integrator with continuous output.
//!
//! Step-size control and the fourth-order dense-output interpolant follow
//! Hairer, Nørsett & Wanner, *Solving Ordinary Differential Equations I*,
//! (the `DOPRI5` code).

use crate::error::{Error, Result};

/// Mixed relative/absolute local error tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Result<Self> {
        for (name, v) in [("rtol", rtol), ("atol", atol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1e-3], got {v}"
                )));
            }
        }
        Ok(Self { rtol, atol })
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 10_000_000;

/// Integrates `y' = f(t, y)` from `times[0]` and returns the solution at each
/// entry of `times`, which must be non-decreasing.
pub fn integrate<F>(mut f: F, y0: &[f64], times: &[f64], tol: Tolerances) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument("output times must be non-decreasing".into()));
    }
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if next == times.len() {
        return Ok(out);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut cont = vec![vec![0.0; n]; 5];

    f(t, &y, &mut k1);
    let mut h = initial_step(&mut f, t, &y, &k1, t_end - t0, tol);
    let mut facold: f64 = 1e-4;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let mut reject = false;
    let mut steps = 0;

    loop {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepSizeUnderflow { t });
        }
        if 0.1 * h.abs() <= t.abs() * f64::EPSILON {
            return Err(Error::StepSizeUnderflow { t });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &ynew, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            reject = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(0.1, 5.0);
        let hnew = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            let t_new = if last { t_end } else { t + h };
            // Dense output coefficients for the interval [t, t_new].
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next < times.len() && times[next] <= t_new {
                if times[next] == t_new {
                    out.push(ynew.clone());
                } else {
                    let theta = (times[next] - t) / h;
                    let theta1 = 1.0 - theta;
                    out.push(
                        (0..n)
                            .map(|i| {
                                cont[0][i]
                                    + theta
                                        * (cont[1][i]
                                            + theta1
                                                * (cont[2][i]
                                                    + theta * (cont[3][i] + theta1 * cont[4][i])))
                            })
                            .collect(),
                    );
                }
                next += 1;
            }
            std::mem::swap(&mut k1, &mut k7);
            std::mem::swap(&mut y, &mut ynew);
            t = t_new;
            if last || next == times.len() {
                break;
            }
            let hnew = if reject { hnew.min(h) } else { hnew };
            reject = false;
            h = hnew;
        } else {
            h /= (fac11 / safe).min(5.0);
            reject = true;
        }
    }
    Ok(out)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64, tol: Tolerances) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len() as f64;
    let sk: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let rms = |v: &mut dyn Iterator<Item = f64>| (v.map(|x| x * x).sum::<f64>() / n).sqrt();
    let d0 = rms(&mut y.iter().zip(&sk).map(|(a, s)| a / s));
    let d1 = rms(&mut f0.iter().zip(&sk).map(|(a, s)| a / s));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1);
    let d2 = rms(&mut f1.iter().zip(f0).zip(&sk).map(|((a, b), s)| (a - b) / s)) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
