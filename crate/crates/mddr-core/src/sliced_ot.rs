//! Exact 1-D optimal transport on empirical measures and the Monte Carlo
//! sliced Wasserstein distance with analytic support-point gradients.
//!
//! All measures are uniform-weight point clouds. One-dimensional transport
//! between uniform empirical measures with unequal atom counts is computed
//! exactly on the merged quantile grid (a north-west-corner walk in integer
//! mass units), so no resampling is ever needed.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MddrError, Result};
use crate::rng::stream_rng;

/// A uniform-weight point cloud: M atoms in R^d, each carrying mass 1/M.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Array2<f64>,
}

impl EmpiricalDistribution {
    /// Wraps an M×d atom matrix. Requires M ≥ 1, d ≥ 1 and finite entries.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(MddrError::invalid("empirical distribution needs at least one atom"));
        }
        if points.ncols() == 0 {
            return Err(MddrError::invalid("empirical distribution needs dimension >= 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("empirical distribution atoms must be finite"));
        }
        Ok(Self { points })
    }

    /// Builds a 1-D distribution from a list of values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let m = values.len();
        Self::new(Array2::from_shape_vec((m, 1), values.to_vec()).expect("shape"))
    }

    /// Number of atoms M.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // M >= 1 by construction
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Projects every atom onto a direction: returns θᵀx_j for j = 1..M.
    pub fn project(&self, theta: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        project_into(&self.points.view(), theta, &mut out);
        out
    }
}

/// A fixed set of random projection directions on the unit sphere.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    directions: Array2<f64>,
    seed: u64,
}

impl ProjectionSet {
    /// Number of directions L.
    pub fn len(&self) -> usize {
        self.directions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.nrows() == 0
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    /// Seed of the stream the directions were drawn from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn directions(&self) -> ArrayView2<'_, f64> {
        self.directions.view()
    }

    /// Row l as a direction vector.
    pub fn direction(&self, l: usize) -> ArrayView1<'_, f64> {
        self.directions.row(l)
    }
}

/// Draws L i.i.d. directions uniform on S^{d-1}: standard Gaussian vectors
/// normalized to unit length. Deterministic in `seed`.
pub fn sample_projections(l: usize, d: usize, seed: u64) -> Result<ProjectionSet> {
    if l == 0 {
        return Err(MddrError::invalid("projection count L must be >= 1"));
    }
    if d == 0 {
        return Err(MddrError::invalid("projection dimension d must be >= 1"));
    }
    let mut rng = stream_rng(seed, &[]);
    let mut directions = Array2::<f64>::zeros((l, d));
    for mut row in directions.rows_mut() {
        loop {
            let mut norm_sq = 0.0;
            for v in row.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = g;
                norm_sq += g * g;
            }
            // Degenerate draws are astronomically rare; resample to keep the
            // unit-norm invariant unconditional.
            if norm_sq.sqrt() > 1e-12 {
                let inv = 1.0 / norm_sq.sqrt();
                row.mapv_inplace(|v| v * inv);
                break;
            }
        }
    }
    Ok(ProjectionSet { directions, seed })
}

/// One 1-D transport plan between two uniform empirical measures, stored in
/// integer mass units so marginals are exact. Unit value is 1/denom with
/// denom = M_src · M_tgt.
#[derive(Debug, Clone)]
pub struct TransportPlan1D {
    entries: Vec<(usize, usize, u64)>,
    denom: u64,
}

impl TransportPlan1D {
    /// (source-index, target-index, mass) triples; total mass 1.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let denom = self.denom as f64;
        self.entries.iter().map(move |&(i, j, u)| (i, j, u as f64 / denom))
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// Transport cost Σ mass · |x_i − y_j|^p under this plan.
    pub fn cost(&self, xs: &[f64], ys: &[f64], p: f64) -> f64 {
        let denom = self.denom as f64;
        self.entries
            .iter()
            .map(|&(i, j, u)| (u as f64 / denom) * pow_abs(xs[i] - ys[j], p))
            .sum()
    }
}

#[inline]
pub(crate) fn pow_abs(delta: f64, p: f64) -> f64 {
    if p == 2.0 {
        delta * delta
    } else if p == 1.0 {
        delta.abs()
    } else {
        delta.abs().powf(p)
    }
}

/// |s|^{p-2}·s with the subgradient convention that the value is 0 when s = 0
/// (relevant for p < 2, where the power would blow up).
#[inline]
pub(crate) fn signed_pow(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else if p == 2.0 {
        s
    } else if p == 1.0 {
        s.signum()
    } else {
        s.abs().powf(p - 2.0) * s
    }
}

/// Walks the north-west-corner plan between uniform measures with m and n
/// atoms (in sorted order), in integer units of 1/(m·n). The callback receives
/// (sorted source index, sorted target index, units).
#[inline]
pub(crate) fn nw_walk(m: usize, n: usize, mut visit: impl FnMut(usize, usize, u64)) {
    let unit_src = n as u64; // each source atom holds n units
    let unit_tgt = m as u64; // each target atom holds m units
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ri, mut cj) = (unit_src, unit_tgt);
    while i < m && j < n {
        let mass = ri.min(cj);
        visit(i, j, mass);
        ri -= mass;
        cj -= mass;
        if ri == 0 {
            i += 1;
            ri = unit_src;
        }
        if cj == 0 {
            j += 1;
            cj = unit_tgt;
        }
    }
}

fn validate_1d_input(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.is_empty() || ys.is_empty() {
        return Err(MddrError::invalid("1-D transport inputs must be nonempty"));
    }
    if xs.iter().chain(ys.iter()).any(|v| v.is_nan()) {
        return Err(MddrError::invalid("1-D transport inputs must not contain NaN"));
    }
    if xs.windows(2).any(|w| w[0] > w[1]) || ys.windows(2).any(|w| w[0] > w[1]) {
        return Err(MddrError::invalid("1-D transport inputs must be sorted ascending"));
    }
    Ok(())
}

/// W_p^p between two sorted uniform empirical measures, computed exactly on
/// the merged quantile grid. Handles unequal atom counts.
pub fn wasserstein_1d_pp(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    validate_1d_input(xs, ys)?;
    if p < 1.0 {
        return Err(MddrError::invalid(format!("order p must be >= 1, got {p}")));
    }
    Ok(w1d_pp_sorted(xs, ys, p))
}

/// Same as [`wasserstein_1d_pp`] but assumes validated, sorted input.
#[inline]
pub(crate) fn w1d_pp_sorted(xs: &[f64], ys: &[f64], p: f64) -> f64 {
    let denom = (xs.len() * ys.len()) as f64;
    let mut total = 0.0;
    nw_walk(xs.len(), ys.len(), |i, j, units| {
        total += units as f64 * pow_abs(xs[i] - ys[j], p);
    });
    total / denom
}

/// North-west-corner optimal plan between sorted uniform empirical measures.
/// Its cost equals [`wasserstein_1d_pp`] for every p ≥ 1.
pub fn transport_plan_1d(xs: &[f64], ys: &[f64]) -> Result<TransportPlan1D> {
    validate_1d_input(xs, ys)?;
    let mut entries = Vec::with_capacity(xs.len() + ys.len());
    nw_walk(xs.len(), ys.len(), |i, j, units| entries.push((i, j, units)));
    Ok(TransportPlan1D {
        entries,
        denom: (xs.len() * ys.len()) as u64,
    })
}

#[inline]
pub(crate) fn project_into(points: &ArrayView2<'_, f64>, theta: ArrayView1<'_, f64>, out: &mut [f64]) {
    debug_assert_eq!(points.ncols(), theta.len());
    debug_assert_eq!(points.nrows(), out.len());
    for (slot, row) in out.iter_mut().zip(points.rows()) {
        *slot = row.dot(&theta);
    }
}

/// Stable argsort by value; ties keep atom-index order so results are
/// deterministic.
#[inline]
pub(crate) fn argsort_into(vals: &[f64], idx: &mut Vec<usize>) {
    idx.clear();
    idx.extend(0..vals.len());
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
}

fn check_projection_compat(
    g1: &EmpiricalDistribution,
    g2: &EmpiricalDistribution,
    proj: &ProjectionSet,
) -> Result<()> {
    if g1.dim() != g2.dim() {
        return Err(MddrError::dim(g1.dim(), g2.dim(), "distribution dimensions"));
    }
    if proj.dim() != g1.dim() {
        return Err(MddrError::dim(g1.dim(), proj.dim(), "projection dimension"));
    }
    Ok(())
}

/// Monte Carlo sliced Wasserstein distance to the p-th power:
/// (1/L)·Σ_l W_p^p over the projections in `proj`. Deterministic given `proj`.
pub fn sw_distance_pp(
    g1: &EmpiricalDistribution,
    g2: &EmpiricalDistribution,
    proj: &ProjectionSet,
    p: f64,
) -> Result<f64> {
    check_projection_compat(g1, g2, proj)?;
    if p < 1.0 {
        return Err(MddrError::invalid(format!("order p must be >= 1, got {p}")));
    }
    let mut scratch = SwScratch::new(g1.len(), g2.len());
    let mut total = 0.0;
    for theta in proj.directions.rows() {
        total += sw_term(&g1.points.view(), &g2.points.view(), theta, p, &mut scratch);
    }
    Ok(total / proj.len() as f64)
}

/// Gradient of [`sw_distance_pp`] with respect to the atoms of `g1`, holding
/// the per-projection optimal plans fixed. Row j is
/// (p/L)·Σ_l Σ_{j'} ψ*_{l,jj'} |θ_lᵀΔ|^{p−2}(θ_lᵀΔ)·θ_l with Δ = z_j − y_{j'};
/// terms with θ_lᵀΔ = 0 contribute 0.
pub fn sw_grad_points(
    g1: &EmpiricalDistribution,
    g2: &EmpiricalDistribution,
    proj: &ProjectionSet,
    p: f64,
) -> Result<Array2<f64>> {
    check_projection_compat(g1, g2, proj)?;
    if p < 1.0 {
        return Err(MddrError::invalid(format!("order p must be >= 1, got {p}")));
    }
    let mut grad = Array2::<f64>::zeros((g1.len(), g1.dim()));
    let mut scratch = SwScratch::new(g1.len(), g2.len());
    for theta in proj.directions.rows() {
        accumulate_sw_grad(
            &g1.points.view(),
            &g2.points.view(),
            theta,
            p,
            1.0 / proj.len() as f64,
            &mut grad,
            &mut scratch,
        );
    }
    Ok(grad)
}

/// Reusable buffers for repeated per-projection transport work.
pub(crate) struct SwScratch {
    pub proj1: Vec<f64>,
    pub proj2: Vec<f64>,
    pub idx1: Vec<usize>,
    pub idx2: Vec<usize>,
}

impl SwScratch {
    pub(crate) fn new(m1: usize, m2: usize) -> Self {
        Self {
            proj1: vec![0.0; m1],
            proj2: vec![0.0; m2],
            idx1: Vec::with_capacity(m1),
            idx2: Vec::with_capacity(m2),
        }
    }

    fn resize(&mut self, m1: usize, m2: usize) {
        self.proj1.resize(m1, 0.0);
        self.proj2.resize(m2, 0.0);
    }
}

/// W_p^p between the θ-projections of two point clouds.
pub(crate) fn sw_term(
    pts1: &ArrayView2<'_, f64>,
    pts2: &ArrayView2<'_, f64>,
    theta: ArrayView1<'_, f64>,
    p: f64,
    scratch: &mut SwScratch,
) -> f64 {
    scratch.resize(pts1.nrows(), pts2.nrows());
    project_into(pts1, theta, &mut scratch.proj1);
    project_into(pts2, theta, &mut scratch.proj2);
    scratch.proj1.sort_unstable_by(f64::total_cmp);
    scratch.proj2.sort_unstable_by(f64::total_cmp);
    w1d_pp_sorted(&scratch.proj1, &scratch.proj2, p)
}

/// Adds `scale`·∇_{z} W_p^p(θ♯G1, θ♯G2) (plan held fixed) into `grad`.
pub(crate) fn accumulate_sw_grad(
    pts1: &ArrayView2<'_, f64>,
    pts2: &ArrayView2<'_, f64>,
    theta: ArrayView1<'_, f64>,
    p: f64,
    scale: f64,
    grad: &mut Array2<f64>,
    scratch: &mut SwScratch,
) {
    scratch.resize(pts1.nrows(), pts2.nrows());
    project_into(pts1, theta, &mut scratch.proj1);
    project_into(pts2, theta, &mut scratch.proj2);
    argsort_into(&scratch.proj1, &mut scratch.idx1);
    argsort_into(&scratch.proj2, &mut scratch.idx2);
    let (m, n) = (pts1.nrows(), pts2.nrows());
    let denom = (m * n) as f64;
    nw_walk(m, n, |a, b, units| {
        let i = scratch.idx1[a];
        let j = scratch.idx2[b];
        let s = scratch.proj1[i] - scratch.proj2[j];
        let w = p * (units as f64 / denom) * signed_pow(s, p) * scale;
        if w != 0.0 {
            let mut row = grad.row_mut(i);
            for (g, t) in row.iter_mut().zip(theta.iter()) {
                *g += w * t;
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dist(points: Array2<f64>) -> EmpiricalDistribution {
        EmpiricalDistribution::new(points).unwrap()
    }

    #[test]
    fn empirical_distribution_validates() {
        assert!(EmpiricalDistribution::new(Array2::zeros((0, 2))).is_err());
        assert!(EmpiricalDistribution::new(Array2::zeros((2, 0))).is_err());
        assert!(EmpiricalDistribution::new(array![[f64::NAN]]).is_err());
        assert!(EmpiricalDistribution::new(array![[1.0, 2.0]]).is_ok());
    }

    #[test]
    fn projections_reject_degenerate_requests() {
        assert!(sample_projections(0, 2, 1).is_err());
        assert!(sample_projections(4, 0, 1).is_err());
    }

    #[test]
    fn projections_in_1d_are_signs() {
        let proj = sample_projections(16, 1, 3).unwrap();
        for v in proj.directions().iter() {
            assert!((v.abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn projections_have_unit_norm() {
        let proj = sample_projections(1000, 2, 7).unwrap();
        for row in proj.directions().rows() {
            let norm: f64 = row.dot(&row).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_coordinate_means_satisfy_clt_bound() {
        let l = 10_000;
        let proj = sample_projections(l, 3, 11).unwrap();
        for c in 0..3 {
            let mean = proj.directions().column(c).sum() / l as f64;
            assert!(mean.abs() < 3.0 / (l as f64).sqrt(), "coord {c} mean {mean}");
        }
    }

    #[test]
    fn projections_are_reproducible() {
        let a = sample_projections(64, 4, 99).unwrap();
        let b = sample_projections(64, 4, 99).unwrap();
        assert_eq!(a.directions(), b.directions());
    }

    #[test]
    fn w1d_single_atom_shift() {
        assert_eq!(wasserstein_1d_pp(&[0.0], &[1.0], 2.0).unwrap(), 1.0);
    }

    #[test]
    fn w1d_identity_is_zero() {
        assert_eq!(wasserstein_1d_pp(&[0.0, 1.0], &[0.0, 1.0], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn w1d_two_atom_shift_p1() {
        // Exhaustive over both matchings: monotone matching costs 1, the
        // crossing one costs 2.
        assert!((wasserstein_1d_pp(&[0.0, 2.0], &[1.0, 3.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1d_unequal_counts_splits_mass() {
        // masses (1) vs (1/2, 1/2): cost 1/2·1 + 1/2·2 = 1.5? No: |0-1|/2 + |0-2|/2 = 1.5
        // the LP optimum ships half the unit mass to each target atom.
        assert!((wasserstein_1d_pp(&[0.0], &[1.0, 2.0], 1.0).unwrap() - 1.5).abs() < 1e-15);
        // spec pair: xs=[0], ys=[0,2] → 0/2 + 2/2 = 1
        assert!((wasserstein_1d_pp(&[0.0], &[0.0, 2.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1d_rejects_bad_input() {
        assert!(wasserstein_1d_pp(&[], &[1.0], 2.0).is_err());
        assert!(wasserstein_1d_pp(&[0.0], &[1.0], 0.5).is_err());
        assert!(wasserstein_1d_pp(&[f64::NAN], &[1.0], 2.0).is_err());
        assert!(wasserstein_1d_pp(&[1.0, 0.0], &[1.0], 2.0).is_err());
    }

    #[test]
    fn plan_equal_sizes_is_monotone_matching() {
        let plan = transport_plan_1d(&[0.0, 1.0], &[5.0, 6.0]).unwrap();
        let entries: Vec<_> = plan.entries().collect();
        assert_eq!(entries, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn plan_splits_single_source() {
        let plan = transport_plan_1d(&[0.0], &[1.0, 2.0]).unwrap();
        let entries: Vec<_> = plan.entries().collect();
        assert_eq!(entries, vec![(0, 0, 0.5), (0, 1, 0.5)]);
    }

    #[test]
    fn plan_marginals_are_uniform() {
        let xs = [0.0, 0.3, 0.7];
        let ys = [0.1, 0.9];
        let plan = transport_plan_1d(&xs, &ys).unwrap();
        let mut row = vec![0.0; 3];
        let mut col = vec![0.0; 2];
        for (i, j, m) in plan.entries() {
            row[i] += m;
            col[j] += m;
        }
        for r in row {
            assert!((r - 1.0 / 3.0).abs() < 1e-12);
        }
        for c in col {
            assert!((c - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_cost_matches_distance() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 3.0];
        let plan = transport_plan_1d(&xs, &ys).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let w = wasserstein_1d_pp(&xs, &ys, p).unwrap();
            assert!((plan.cost(&xs, &ys, p) - w).abs() < 1e-12);
        }
    }

    #[test]
    fn sw_identity_is_zero() {
        let g = dist(array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]);
        let proj = sample_projections(32, 2, 5).unwrap();
        assert_eq!(sw_distance_pp(&g, &g, &proj, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn sw_point_masses_match_analytic_expectation() {
        // E|θᵀu|² = ‖u‖²/d for θ uniform on the sphere.
        let g1 = dist(array![[0.0, 0.0]]);
        let g2 = dist(array![[1.0, 0.0]]);
        let proj = sample_projections(100_000, 2, 17).unwrap();
        let sw = sw_distance_pp(&g1, &g2, &proj, 2.0).unwrap();
        assert!((sw - 0.5).abs() < 0.02, "sw = {sw}");
    }

    #[test]
    fn sw_in_1d_equals_w1d_for_any_projection_set() {
        let g1 = dist(array![[0.0], [2.0], [5.0]]);
        let g2 = dist(array![[1.0], [1.5]]);
        let proj = sample_projections(8, 1, 23).unwrap();
        let sw = sw_distance_pp(&g1, &g2, &proj, 2.0).unwrap();
        let w = wasserstein_1d_pp(&[0.0, 2.0, 5.0], &[1.0, 1.5], 2.0).unwrap();
        assert!((sw - w).abs() < 1e-12);
    }

    #[test]
    fn sw_rejects_dimension_mismatch() {
        let g1 = dist(array![[0.0, 0.0]]);
        let g2 = dist(array![[1.0]]);
        let proj = sample_projections(4, 2, 1).unwrap();
        assert!(sw_distance_pp(&g1, &g2, &proj, 2.0).is_err());
        let g3 = dist(array![[1.0, 1.0]]);
        let proj1 = sample_projections(4, 1, 1).unwrap();
        assert!(sw_distance_pp(&g1, &g3, &proj1, 2.0).is_err());
    }

    #[test]
    fn sw_grad_zero_on_identical_inputs() {
        let g = dist(array![[0.0, 1.0], [2.0, -1.0]]);
        let proj = sample_projections(16, 2, 9).unwrap();
        let grad = sw_grad_points(&g, &g, &proj, 2.0).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sw_grad_1d_point_masses() {
        // d/dz (z−1)² at z = 0 is −2, independent of the θ = ±1 draw.
        let g1 = dist(array![[0.0]]);
        let g2 = dist(array![[1.0]]);
        let proj = sample_projections(7, 1, 13).unwrap();
        let grad = sw_grad_points(&g1, &g2, &proj, 2.0).unwrap();
        assert!((grad[[0, 0]] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sw_grad_matches_finite_differences() {
        let pts = array![
            [0.3, -0.2],
            [1.1, 0.4],
            [-0.5, 0.9],
            [0.0, 0.0],
            [2.0, -1.3]
        ];
        let ys = array![[0.5, 0.5], [-1.0, 0.2], [0.7, -0.7], [1.5, 1.5], [-0.2, -0.9]];
        let g2 = dist(ys);
        let proj = sample_projections(24, 2, 31).unwrap();
        let g1 = dist(pts.clone());
        let grad = sw_grad_points(&g1, &g2, &proj, 2.0).unwrap();
        let eps = 1e-6;
        for j in 0..pts.nrows() {
            for c in 0..2 {
                let mut plus = pts.clone();
                plus[[j, c]] += eps;
                let mut minus = pts.clone();
                minus[[j, c]] -= eps;
                let fp = sw_distance_pp(&dist(plus), &g2, &proj, 2.0).unwrap();
                let fm = sw_distance_pp(&dist(minus), &g2, &proj, 2.0).unwrap();
                let fd = (fp - fm) / (2.0 * eps);
                let rel = (grad[[j, c]] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "atom {j} coord {c}: analytic {} fd {}", grad[[j, c]], fd);
            }
        }
    }

    #[test]
    fn sw_distance_is_deterministic() {
        let g1 = dist(array![[0.0, 1.0], [1.0, 2.0]]);
        let g2 = dist(array![[3.0, -1.0], [0.5, 0.5], [2.0, 2.0]]);
        let proj = sample_projections(64, 2, 41).unwrap();
        let a = sw_distance_pp(&g1, &g2, &proj, 2.0).unwrap();
        let b = sw_distance_pp(&g1, &g2, &proj, 2.0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
