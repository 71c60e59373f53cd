//! Neumann eigenbasis of `Δ - I` on the box, the Galerkin projection and
//! the analysis/synthesis transforms.
//!
//! Modes are products of `c_k cos(kπ x / L)` sampled at cell centers. With
//! `c_0 = 1/√L` and `c_k = √(2/L)` these samples are orthonormal under
//! midpoint quadrature (the DCT-II orthogonality relations), so analysis is
//! an exact inverse of synthesis on the span.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Clone, Debug)]
pub struct SpectralBasis {
    grid: Grid,
    modes: Vec<[usize; 3]>,
    eigenvalues: Vec<f64>,
    /// `samples[m * cells + ix]`
    samples: Vec<f64>,
}

/// Normalized 1D cosine sampled at cell `i` of an `n`-cell axis of length `l`.
fn cosine_1d(k: usize, i: usize, n: usize, l: f64) -> f64 {
    let c = if k == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
    c * (k as f64 * PI * (i as f64 + 0.5) / n as f64).cos()
}

/// `λ_k = 1 + Σ_j (k_j π / L_j)²`.
pub fn eigenvalue(grid: &Grid, k: [usize; 3]) -> f64 {
    1.0 + (0..grid.dim())
        .map(|a| (k[a] as f64 * PI / grid.extents()[a]).powi(2))
        .sum::<f64>()
}

impl SpectralBasis {
    /// The `n` modes of smallest eigenvalue, ties broken by lexicographic `k`.
    pub fn new(grid: &Grid, n: usize) -> Result<Self> {
        let g = *grid;
        if n == 0 || n > g.len() {
            return Err(Error::InvalidArgument(format!(
                "mode count {n} must lie in 1..={} (the cell count)",
                g.len()
            )));
        }
        let cells = g.cells();
        let mut all: Vec<([usize; 3], f64)> = (0..g.len())
            .map(|ix| {
                let k = g.multi_index(ix);
                (k, eigenvalue(&g, k))
            })
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(n);

        let tables: Vec<Vec<f64>> = (0..g.dim())
            .map(|a| {
                let na = cells[a];
                (0..na * na)
                    .map(|p| cosine_1d(p / na, p % na, na, g.extents()[a]))
                    .collect()
            })
            .collect();
        let mut samples = vec![0.0; n * g.len()];
        for (m, (k, _)) in all.iter().enumerate() {
            for ix in 0..g.len() {
                let mi = g.multi_index(ix);
                let mut s = 1.0;
                for a in 0..g.dim() {
                    s *= tables[a][k[a] * cells[a] + mi[a]];
                }
                samples[m * g.len() + ix] = s;
            }
        }
        Ok(Self {
            grid: g,
            modes: all.iter().map(|(k, _)| *k).collect(),
            eigenvalues: all.iter().map(|(_, l)| *l).collect(),
            samples,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("basis is nonempty")
    }

    /// Cell samples of mode `m`.
    pub fn mode(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        &self.samples[m * n..(m + 1) * n]
    }

    /// Mode `m` as a scalar field.
    pub fn mode_field(&self, m: usize) -> Field {
        Field::from_data(self.grid, 1, self.mode(m).to_vec()).expect("mode samples are finite")
    }

    /// Midpoint-quadrature Gram matrix of the sampled modes, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.len();
        let w = self.grid.cell_volume();
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = self.mode(a).iter().zip(self.mode(b)).map(|(x, y)| x * y).sum::<f64>() * w;
            }
        }
        out
    }

    /// `P_n`: coefficients `g_{k,c} = <f_c, mode_k>` by midpoint quadrature.
    pub fn analyze(&self, f: &Field) -> Result<SpectralState> {
        f.expect_on(&self.grid)?;
        let nc = f.ncomp();
        let w = self.grid.cell_volume();
        let mut coeffs = vec![0.0; self.len() * nc];
        let data = f.data();
        for m in 0..self.len() {
            let mode = self.mode(m);
            let out = &mut coeffs[m * nc..(m + 1) * nc];
            for (ix, &s) in mode.iter().enumerate() {
                for c in 0..nc {
                    out[c] += s * data[ix * nc + c];
                }
            }
            for x in out.iter_mut() {
                *x *= w;
            }
        }
        Ok(SpectralState { coeffs, ncomp: nc, t: 0.0 })
    }

    /// `Σ_k g_k mode_k` sampled at cell centers.
    pub fn synthesize(&self, s: &SpectralState) -> Result<Field> {
        self.synthesize_weighted(s, |_| 1.0)
    }

    /// `Σ_k w(m) g_k mode_k`; with `w(m) = 1 - λ_m` this is `Δ u_n`.
    pub fn synthesize_weighted(&self, s: &SpectralState, w: impl Fn(usize) -> f64) -> Result<Field> {
        if s.modes() != self.len() {
            return Err(Error::shape(format!("{} modes", self.len()), format!("{} modes", s.modes())));
        }
        let nc = s.ncomp;
        let mut data = vec![0.0; self.grid.len() * nc];
        for m in 0..self.len() {
            let wm = w(m);
            let gm = &s.coeffs[m * nc..(m + 1) * nc];
            if gm.iter().all(|&x| x == 0.0) || wm == 0.0 {
                continue;
            }
            for (ix, &v) in self.mode(m).iter().enumerate() {
                for c in 0..nc {
                    data[ix * nc + c] += wm * gm[c] * v;
                }
            }
        }
        Field::from_data(self.grid, nc, data)
    }

    /// `P_n f` as a field.
    pub fn project(&self, f: &Field) -> Result<Field> {
        self.synthesize(&self.analyze(f)?)
    }

    /// `Σ (λ_k - 1)^p |g_k|²`: `p = 1` is `∫|∇u_n|²`, `p = 2` is `∫|Δu_n|²`.
    pub fn weighted_sq(&self, s: &SpectralState, p: i32) -> f64 {
        let nc = s.ncomp;
        (0..self.len())
            .map(|m| {
                let w = (self.eigenvalues[m] - 1.0).powi(p);
                w * s.coeffs[m * nc..(m + 1) * nc].iter().map(|x| x * x).sum::<f64>()
            })
            .sum()
    }

    /// Mode table as CSV: `index,k0[,k1[,k2]],lambda`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.grid.dim();
        let mut header = vec!["index".to_string()];
        header.extend((0..d).map(|a| format!("k{a}")));
        header.push("lambda".into());
        out.write_record(&header)?;
        for (m, k) in self.modes.iter().enumerate() {
            let mut row = vec![m.to_string()];
            row.extend(k[..d].iter().map(|x| x.to_string()));
            row.push(self.eigenvalues[m].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Coefficients of a field in a [`SpectralBasis`], `coeffs[mode * ncomp + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub coeffs: Vec<f64>,
    pub ncomp: usize,
    pub t: f64,
}

impl SpectralState {
    pub fn zeros(modes: usize, ncomp: usize) -> Self {
        Self { coeffs: vec![0.0; modes * ncomp], ncomp, t: 0.0 }
    }

    /// The unit coefficient vector selecting `mode` in component `c`.
    pub fn unit(modes: usize, ncomp: usize, mode: usize, c: usize) -> Self {
        let mut s = Self::zeros(modes, ncomp);
        s.coeffs[mode * ncomp + c] = 1.0;
        s
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len() / self.ncomp
    }

    /// `Σ |g|²`, equal to `‖u_n‖²_{L²}`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|x| x.is_finite())
    }
}

/// Coefficients of `f` in the full cosine basis of its grid (every mode the
/// grid resolves), in multi-index order, by separable transforms.
pub fn cosine_coefficients(f: &Field) -> Vec<f64> {
    let g = *f.grid();
    let nc = f.ncomp();
    let mut cur = f.data().to_vec();
    for axis in 0..g.dim() {
        let n = g.cells()[axis];
        let h = g.spacing(axis);
        let l = g.extents()[axis];
        let table: Vec<f64> = (0..n * n).map(|p| cosine_1d(p / n, p % n, n, l) * h).collect();
        let stride = g.stride(axis);
        let mut next = vec![0.0; cur.len()];
        for ix in 0..g.len() {
            let mi = g.multi_index(ix);
            if mi[axis] != 0 {
                continue;
            }
            for k in 0..n {
                let row = &table[k * n..(k + 1) * n];
                for c in 0..nc {
                    let mut acc = 0.0;
                    for (i, &w) in row.iter().enumerate() {
                        acc += w * cur[(ix + i * stride) * nc + c];
                    }
                    next[(ix + k * stride) * nc + c] = acc;
                }
            }
        }
        cur = next;
    }
    cur
}

/// `∫|∇ f̃|²` of the cosine interpolant `f̃` of `f`, which dominates
/// `∫|∇ P_n f|²` for every truncation `n`.
pub fn cosine_grad_energy(f: &Field) -> f64 {
    let g = *f.grid();
    let nc = f.ncomp();
    let coeffs = cosine_coefficients(f);
    (0..g.len())
        .map(|ix| {
            let w = eigenvalue(&g, g.multi_index(ix)) - 1.0;
            w * coeffs[ix * nc..(ix + 1) * nc].iter().map(|x| x * x).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{self, inner, l2_sq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: Grid, nc: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..g.len() * nc).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_data(g, nc, data).unwrap()
    }

    #[test]
    fn eigenvalue_examples() {
        let g = Grid::cube(1, PI, 16).unwrap();
        let b = SpectralBasis::new(&g, 4).unwrap();
        assert_eq!(b.modes()[2], [2, 0, 0]);
        assert!((b.eigenvalues()[2] - 5.0).abs() < 1e-12);
        assert_eq!(b.eigenvalues()[0], 1.0);
        let m0 = b.mode(0);
        assert!(m0.iter().all(|&x| (x - m0[0]).abs() < 1e-15));
    }

    #[test]
    fn square_ties_are_lexicographic() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let b = SpectralBasis::new(&g, 4).unwrap();
        let p2 = PI * PI;
        let expect = [1.0, 1.0 + p2, 1.0 + p2, 1.0 + 2.0 * p2];
        for (l, e) in b.eigenvalues().iter().zip(expect) {
            assert!((l - e).abs() < 1e-12);
        }
        assert_eq!(&b.modes()[..4], &[[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]]);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn too_many_modes() {
        let g = Grid::cube(1, 1.0, 8).unwrap();
        assert!(SpectralBasis::new(&g, 8).is_ok());
        assert!(matches!(SpectralBasis::new(&g, 9), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gram_is_identity() {
        for g in [Grid::cube(1, PI, 32).unwrap(), Grid::new(&[1.0, 2.0], &[8, 12]).unwrap()] {
            let b = SpectralBasis::new(&g, g.len().min(40)).unwrap();
            let n = b.len();
            let gram = b.gram();
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[i * n + j] - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn analyze_examples() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let b = SpectralBasis::new(&g, 10).unwrap();
        let f = b.mode_field(5);
        let s = b.analyze(&f).unwrap();
        for (m, x) in s.coeffs.iter().enumerate() {
            let e = if m == 5 { 1.0 } else { 0.0 };
            assert!((x - e).abs() < 1e-12);
        }
        let s = b.analyze(&Field::constant(g, &[0.0, 0.0, 1.0])).unwrap();
        for m in 1..b.len() {
            assert!(s.coeffs[m * 3..m * 3 + 3].iter().all(|x| x.abs() < 1e-12));
        }
        assert!((s.coeffs[2] - 1.0).abs() < 1e-12);
        let other = Grid::cube(2, 1.0, 4).unwrap();
        assert!(b.analyze(&Field::zeros(other, 3)).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let b = SpectralBasis::new(&g, 12).unwrap();
        assert_eq!(b.synthesize(&SpectralState::zeros(12, 3)).unwrap().sup_norm(), 0.0);
        assert!(b.synthesize(&SpectralState::zeros(11, 3)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SpectralState {
            coeffs: (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            ncomp: 3,
            t: 0.0,
        };
        let back = b.analyze(&b.synthesize(&s).unwrap()).unwrap();
        for (x, y) in back.coeffs.iter().zip(&s.coeffs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_residual_is_second_order() {
        let residual = |n: usize| {
            let g = Grid::cube(2, 1.0, n).unwrap();
            let b = SpectralBasis::new(&g, 6).unwrap();
            let m = 5;
            let u = b.mode_field(m);
            let lap = grid::laplacian_neumann(&u, &g).unwrap();
            lap.lin_comb(1.0, &u, b.eigenvalues()[m] - 1.0).unwrap().sup_norm()
        };
        let ratio = residual(16) / residual(32);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn bessel_and_parseval() {
        let g = Grid::new(&[1.0, 1.5], &[8, 8]).unwrap();
        let b = SpectralBasis::new(&g, 20).unwrap();
        let f = random_field(g, 3, 11);
        let s = b.analyze(&f).unwrap();
        let p = b.synthesize(&s).unwrap();
        assert!(l2_sq(&p) <= l2_sq(&f) + 1e-12);
        assert!((s.norm_sq() - l2_sq(&p)).abs() < 1e-12);
    }

    #[test]
    fn projection_is_self_adjoint_and_idempotent() {
        let g = Grid::cube(2, 1.0, 8).unwrap();
        let b = SpectralBasis::new(&g, 17).unwrap();
        let f = random_field(g, 3, 1);
        let h = random_field(g, 3, 2);
        let lhs = inner(&b.project(&f).unwrap(), &h).unwrap();
        let rhs = inner(&f, &b.project(&h).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let p = b.project(&f).unwrap();
        assert!(b.project(&p).unwrap().max_abs_diff(&p).unwrap() < 1e-12);
    }

    #[test]
    fn finite_cosine_sums_are_reproduced() {
        let g = Grid::new(&[2.0, 1.0], &[16, 16]).unwrap();
        let b = SpectralBasis::new(&g, 30).unwrap();
        // every (k0, k1) used below lies among the 30 lowest modes
        let f = Field::from_fn(g, 3, |x, o| {
            o[0] = 0.5 + (PI * x[0] / 2.0).cos();
            o[1] = (PI * x[0]).cos() * (PI * x[1]).cos();
            o[2] = -0.25 * (2.0 * PI * x[1]).cos();
        });
        assert!(b.project(&f).unwrap().max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn weighted_norms_match_spectral_definitions() {
        let g = Grid::cube(1, 1.0, 32).unwrap();
        let b = SpectralBasis::new(&g, 8).unwrap();
        let s = SpectralState::unit(8, 3, 3, 1);
        let lam = b.eigenvalues()[3];
        assert!((b.weighted_sq(&s, 1) - (lam - 1.0)).abs() < 1e-12);
        assert!((b.weighted_sq(&s, 2) - (lam - 1.0).powi(2)).abs() < 1e-10);
        let lap = b.synthesize_weighted(&s, |m| 1.0 - b.eigenvalues()[m]).unwrap();
        assert!((l2_sq(&lap) - (lam - 1.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn full_transform_matches_basis() {
        let g = Grid::new(&[1.0, 2.0], &[6, 8]).unwrap();
        let b = SpectralBasis::new(&g, g.len()).unwrap();
        let f = random_field(g, 2, 7);
        let full = cosine_coefficients(&f);
        let s = b.analyze(&f).unwrap();
        for (m, k) in b.modes().iter().enumerate() {
            let ix = g.linear_index(*k);
            for c in 0..2 {
                assert!((full[ix * 2 + c] - s.coeffs[m * 2 + c]).abs() < 1e-12);
            }
        }
        assert!((cosine_grad_energy(&f) - b.weighted_sq(&s, 1)).abs() < 1e-9);
        let partial = SpectralBasis::new(&g, 10).unwrap();
        assert!(partial.weighted_sq(&partial.analyze(&f).unwrap(), 1) <= cosine_grad_energy(&f));
    }

    #[test]
    fn summary_csv() {
        let g = Grid::cube(1, PI, 8).unwrap();
        let b = SpectralBasis::new(&g, 3).unwrap();
        let mut buf = Vec::new();
        b.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), ["index,k0,lambda", "0,0,1", "1,1,2", "2,2,5"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn projection_contracts_and_is_idempotent(seed in 0u64..10_000, n in 1usize..36) {
                let g = Grid::cube(2, 1.0, 6).unwrap();
                let b = SpectralBasis::new(&g, n).unwrap();
                let f = random_field(g, 3, seed);
                let s = b.analyze(&f).unwrap();
                let p = b.synthesize(&s).unwrap();
                prop_assert!(l2_sq(&p) <= l2_sq(&f) + 1e-12);
                prop_assert!((s.norm_sq() - l2_sq(&p)).abs() < 1e-12);
                let again = b.analyze(&p).unwrap();
                for (x, y) in again.coeffs.iter().zip(&s.coeffs) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
