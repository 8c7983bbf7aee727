//! Reference implementations for tests. Written from the formulas directly,
//! sharing no code with the library.
#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

pub type Mat = Vec<Vec<f64>>;

pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn unit(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn gauss(&mut self) -> f64 {
        let u = self.unit().max(1e-300);
        let v = self.unit();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

// ---------- trend and smoothness scores ----------

pub struct OracleScores {
    pub gcs: f64,
    pub lcs: f64,
    pub glcs: f64,
    pub l: Vec<f64>,
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn angle_blend(sa: f64, sb: f64, alpha: f64) -> f64 {
    let ta = sa.clamp(-1.0, 1.0).acos();
    let tb = sb.clamp(-1.0, 1.0).acos();
    ((1.0 - alpha) * ta + alpha * tb).cos()
}

/// ends = [s(A,A), s(A,B), s(B,A), s(B,B)]
pub fn scores(s_a: &[f64], s_b: &[f64], ends: [f64; 4], gamma: f64) -> OracleScores {
    let k = s_a.len();
    let mut gsum = 0.0;
    for i in 0..k {
        let alpha = (i as f64 + 1.0) / (k as f64 + 1.0);
        let ea = angle_blend(ends[0], ends[1], alpha);
        let eb = angle_blend(ends[2], ends[3], alpha);
        let g = clip01(1.0 - (s_a[i] - ea).abs()) * clip01(1.0 - (s_b[i] - eb).abs());
        gsum += g.powf(gamma);
    }
    let gcs = gsum / k as f64;
    let mut l = Vec::new();
    if k == 1 {
        l.push(1.0);
    } else {
        for i in 0..k {
            let nb = |s: &[f64]| {
                if i == 0 {
                    s[1]
                } else if i == k - 1 {
                    s[k - 2]
                } else {
                    (s[i - 1] + s[i + 1]) / 2.0
                }
            };
            l.push(clip01(1.0 - (s_a[i] - nb(s_a)).abs()) * clip01(1.0 - (s_b[i] - nb(s_b)).abs()));
        }
    }
    let lcs = l.iter().sum::<f64>() / k as f64;
    OracleScores {
        gcs,
        lcs,
        glcs: (gcs * lcs).sqrt(),
        l,
    }
}

// ---------- dense linear algebra ----------

pub fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Gauss-Jordan with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .zip(identity(n))
        .map(|(r, e)| r.iter().copied().chain(e).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Principal square root by Denman-Beavers iteration.
pub fn sqrtm(a: &Mat) -> Mat {
    let n = a.len();
    let (mut y, mut z) = (a.clone(), identity(n));
    for _ in 0..200 {
        let (yi, zi) = (inverse(&y), inverse(&z));
        let ny: Mat = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (y[i][j] + zi[i][j])).collect())
            .collect();
        let nz: Mat = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (z[i][j] + yi[i][j])).collect())
            .collect();
        let delta: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (ny[i][j] - y[i][j]).abs())
            .sum();
        y = ny;
        z = nz;
        if delta < 1e-15 {
            break;
        }
    }
    y
}

pub fn mean_cov(x: &[Vec<f64>]) -> (Vec<f64>, Mat) {
    let (n, d) = (x.len(), x[0].len());
    let mu: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in x {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    (mu, c)
}

/// Frechet distance via the square root of the (non-symmetric) product.
pub fn frechet(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let ((m1, c1), (m2, c2)) = (mean_cov(x), mean_cov(y));
    let d = m1.len();
    let dmu: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let root = sqrtm(&matmul(&c1, &c2));
    let tr = |m: &Mat| (0..d).map(|i| m[i][i]).sum::<f64>();
    dmu + tr(&c1) + tr(&c2) - 2.0 * tr(&root)
}

/// Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let (mut m, mut v) = (a.clone(), identity(n));
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

fn psd_root(a: &Mat) -> Mat {
    let n = a.len();
    let (l, v) = jacobi_eigen(a);
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| v[i][k] * l[k].max(0.0).sqrt() * v[j][k]).sum();
        }
    }
    out
}

/// Frechet distance through symmetric roots; handles singular covariances.
pub fn frechet_psd(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let ((m1, c1), (m2, c2)) = (mean_cov(x), mean_cov(y));
    let d = m1.len();
    let dmu: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let r1 = psd_root(&c1);
    let (l, _) = jacobi_eigen(&matmul(&matmul(&r1, &c2), &r1));
    let tr = |m: &Mat| (0..d).map(|i| m[i][i]).sum::<f64>();
    dmu + tr(&c1) + tr(&c2) - 2.0 * l.iter().map(|x| x.max(0.0).sqrt()).sum::<f64>()
}

// ---------- spectra ----------

/// Unitary DFT magnitudes of an h x w map, unshifted, by direct summation.
pub fn dft_magnitudes(map: &[Vec<f64>]) -> Mat {
    let (h, w) = (map.len(), map[0].len());
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![vec![0.0; w]; h];
    for (u, row) in out.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (y, r) in map.iter().enumerate() {
                for (x, &val) in r.iter().enumerate() {
                    let ph = -std::f64::consts::TAU * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += val * ph.cos();
                    im += val * ph.sin();
                }
            }
            *cell = (re * re + im * im).sqrt() * scale;
        }
    }
    out
}

/// Mean magnitude over bins whose radius, in Nyquist units, is below
/// (low) or at least (high) the cutoff.
pub fn band_means(map: &[Vec<f64>], cutoff: f64) -> (f64, f64) {
    let mag = dft_magnitudes(map);
    let (h, w) = (map.len(), map[0].len());
    let (mut lo, mut nlo, mut hi, mut nhi) = (0.0, 0, 0.0, 0);
    for u in 0..h {
        for v in 0..w {
            let fu = if 2 * u <= h { u as f64 } else { u as f64 - h as f64 } / h as f64;
            let fv = if 2 * v <= w { v as f64 } else { v as f64 - w as f64 } / w as f64;
            let r = (fu * fu + fv * fv).sqrt() * 2.0;
            if r < cutoff {
                lo += mag[u][v];
                nlo += 1;
            } else {
                hi += mag[u][v];
                nhi += 1;
            }
        }
    }
    (lo / nlo as f64, hi / nhi as f64)
}

// ---------- model responses ----------

/// (response, expected (anchor, caption A, caption B) or None for reject)
pub fn parser_fixtures() -> Vec<(&'static str, Option<(&'static str, &'static str, &'static str)>)> {
    let ok = Some(("two animals facing left", "a cat facing left", "a dog facing left"));
    vec![
        (
            "Anchor-prompt: two animals facing left\nCaption A: a cat facing left\nCaption B: a dog facing left",
            ok,
        ),
        (
            "Sure! Here is the result.\n\nAnchor-prompt: two animals facing left\nCaption A: a cat facing left\nCaption B: a dog facing left\n\nLet me know if you need more.",
            ok,
        ),
        (
            "**Anchor-prompt:** two animals facing left\n**Caption A:** a cat facing left\n**Caption B:** a dog facing left",
            ok,
        ),
        (
            "- Anchor-prompt: two animals facing left\n- Caption A: a cat facing left\n- Caption B: a dog facing left",
            ok,
        ),
        (
            "Anchor-prompt: [two animals facing left]\nCaption A: [a cat facing left]\nCaption B: [a dog facing left]",
            ok,
        ),
        (
            "Anchor-prompt: two animals facing left\r\nCaption A: a cat facing left\r\nCaption B: a dog facing left\r\n",
            ok,
        ),
        (
            "anchor-prompt: two animals facing left\ncaption a: a cat facing left\ncaption b: a dog facing left",
            ok,
        ),
        (
            "Caption B: a dog facing left\nAnchor-prompt: two animals facing left\nCaption A: a cat facing left",
            ok,
        ),
        (
            "Anchor-prompt:\ntwo animals facing left\nCaption A:\na cat facing left\nCaption B:\na dog facing left",
            ok,
        ),
        (
            "```\nAnchor-prompt:   two animals facing left   \nCaption A:\ta cat facing left\nCaption B: a dog facing left\n```",
            ok,
        ),
        ("Caption A: a cat facing left\nCaption B: a dog facing left", None),
        ("Anchor-prompt: two animals facing left\nCaption B: a dog facing left", None),
        ("Anchor-prompt: two animals facing left\nCaption A: a cat facing left", None),
        ("", None),
        ("I cannot help with that.", None),
        ("Anchor-prompt:\nCaption A: a cat facing left\nCaption B: a dog facing left", None),
        ("Anchor: two animals\nCaption A: a cat\nCaption B: a dog", None),
        ("Anchor-prompt: two animals\nCaption 1: a cat\nCaption 2: a dog", None),
        ("Anchor-prompt: two animals\nCaption A: a cat\nCaption B:", None),
        ("Anchor-prompt two animals\nCaption A a cat\nCaption B a dog", None),
    ]
}
