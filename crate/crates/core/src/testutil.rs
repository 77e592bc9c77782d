// Reference oracles shared by unit and integration tests. Everything here is
// deliberately naive (adaptive quadrature, O(n^2) sums, Gauss-Jordan inverse)
// and independent of the library code paths it is used to check.
#![allow(dead_code)]

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

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature with a relative
/// tolerance; bisects the worst interval, capped at 4000 subdivisions.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..4000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * total.abs() || err <= 1e-300 {
            break;
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].2 .1.total_cmp(&parts[j].2 .1)).unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// Brute-force E[I_j] = (1/n) sum_t sum_s g_t g_s c(|t-s|) cos(w_j (t-s)).
pub fn expected_periodogram_double_sum(acv: &[f64], mask: &[f64]) -> Vec<f64> {
    let n = acv.len();
    (0..n)
        .map(|j| {
            let w = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let mut total = 0.0;
            for t in 0..n {
                for s in 0..n {
                    let lag = (t as i64 - s as i64).unsigned_abs() as usize;
                    total += mask[t] * mask[s] * acv[lag] * (w * (t as f64 - s as f64)).cos();
                }
            }
            total / n as f64
        })
        .collect()
}

/// Direct O(n^2) DFT periodogram (1/n)|sum_t y_t e^{-i w_j t}|^2, t = 1..n.
pub fn periodogram_direct(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|j| {
            let w = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in y.iter().enumerate() {
                let arg = w * (t + 1) as f64;
                re += v * arg.cos();
                im -= v * arg.sin();
            }
            (re * re + im * im) / n as f64
        })
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting, plus log|det|.
pub fn dense_inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col];
        logdet += p.abs().ln();
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[i][j] -= f * m[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    (inv, logdet)
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_sanity() {
        assert!((integrate(|x| x * x * x, 0.0, 1.0, 1e-14) - 0.25).abs() < 1e-14);
        let g = integrate(|x| (-x * x).exp(), -10.0, 10.0, 1e-14);
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn inverse_sanity() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let (inv, logdet) = dense_inverse_logdet(&a);
        assert!((logdet - 11f64.ln()).abs() < 1e-14);
        assert!((inv[0][0] - 3.0 / 11.0).abs() < 1e-15);
    }
}
