//! Free-support sliced Wasserstein barycenter solver.
//!
//! The barycenter of K marginals under simplex weights π minimizes
//! Σ_k π_k·SW_p^p(G, G_k). The solver parameterizes G by its atom locations
//! and runs T Adam iterations on them, resampling projection directions from
//! a counter-based stream each iteration.
//!
//! The solver can additionally carry forward-mode Jacobians of the barycenter
//! atoms with respect to (a) the parameters of linear maps that produced the
//! marginals as push-forwards and (b) the barycenter weights. The Jacobian
//! recursion differentiates the Adam update exactly, carrying sensitivities
//! of the moment accumulators alongside the atom sensitivities, so analytic
//! derivatives agree with finite differences of a re-run solver under frozen
//! projection streams.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;

use crate::error::{MddrError, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::sliced_ot::{
    accumulate_sw_grad, argsort_into, nw_walk, project_into, sample_projections, signed_pow,
    sw_term, EmpiricalDistribution, ProjectionSet, SwScratch,
};

/// |s|^{p-2} with the convention 0 at s = 0 (p < 2 would blow up there).
#[inline]
fn abs_pow_pm2(s: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if s == 0.0 {
        0.0
    } else {
        s.abs().powf(p - 2.0)
    }
}

/// Simplex weights over the K marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterWeights(Vec<f64>);

impl BarycenterWeights {
    /// Validates entries in [0,1] summing to 1 within 1e-12.
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(MddrError::invalid("weights must have at least one entry"));
        }
        if pi.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(MddrError::invalid("weights must lie in [0, 1]"));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MddrError::invalid(format!("weights must sum to 1, got {sum}")));
        }
        Ok(Self(pi))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Solver settings. The defaults are the ones used throughout the
/// experiments: T = 100 iterations, step 0.1, Adam momenta (0.9, 0.999).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SwbConfig {
    /// Number of Adam iterations T.
    pub iterations: usize,
    /// Step size η.
    pub step_size: f64,
    /// First-moment decay β₁.
    pub beta1: f64,
    /// Second-moment decay β₂.
    pub beta2: f64,
    /// Denominator guard ε.
    pub epsilon: f64,
    /// Barycenter atom count M_G; defaults to the largest marginal count.
    #[serde(default)]
    pub atoms: Option<usize>,
    /// Projections drawn per solver iteration.
    pub projections: usize,
    /// Transport order p.
    pub p: f64,
    /// Stream seed; pipelines derive this per context.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SwbConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            step_size: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            atoms: None,
            projections: 100,
            p: 2.0,
            seed: 0,
        }
    }
}

impl SwbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(MddrError::invalid("swb.iterations must be >= 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(MddrError::invalid("swb.step_size must be > 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(MddrError::invalid(format!("swb.{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(MddrError::invalid("swb.epsilon must be > 0"));
        }
        if self.atoms == Some(0) {
            return Err(MddrError::invalid("swb.atoms must be >= 1 when set"));
        }
        if self.projections == 0 {
            return Err(MddrError::invalid("swb.projections must be >= 1"));
        }
        if self.p < 1.0 {
            return Err(MddrError::invalid("swb.p must be >= 1"));
        }
        Ok(())
    }
}

/// Parameter layout for marginals that are push-forwards of predictor atoms
/// under linear maps A_k x + b_k. Block k occupies `offsets[k]..offsets[k+1]`
/// of the flat parameter vector, A_k in row-major order followed by b_k, so
/// ∂f_k(x)/∂A_k = I_d ⊗ xᵀ and ∂f_k(x)/∂b_k = I_d.
#[derive(Debug, Clone)]
pub struct PushforwardLayout<'a> {
    sources: Vec<ArrayView2<'a, f64>>,
    offsets: Vec<usize>,
    out_dim: usize,
}

impl<'a> PushforwardLayout<'a> {
    /// `sources[k]` holds marginal k's predictor atoms (M_k × h_k);
    /// `out_dim` is the shared output dimension d.
    pub fn new(sources: Vec<ArrayView2<'a, f64>>, out_dim: usize) -> Self {
        let mut offsets = Vec::with_capacity(sources.len() + 1);
        let mut off = 0;
        for s in &sources {
            offsets.push(off);
            off += out_dim * s.ncols() + out_dim;
        }
        offsets.push(off);
        Self { sources, offsets, out_dim }
    }

    /// Total flat parameter length P.
    pub fn param_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_marginals(&self) -> usize {
        self.sources.len()
    }

    pub fn block_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn source(&self, k: usize) -> &ArrayView2<'a, f64> {
        &self.sources[k]
    }

    /// Writes ∂f_k(x)/∂φ for source atom row `j` of marginal `k` into a
    /// d × P matrix slab (row-major), adding to what is there.
    pub fn add_pushforward_jacobian(&self, k: usize, j: usize, slab: &mut [f64]) {
        let d = self.out_dim;
        let h = self.sources[k].ncols();
        let p_len = self.param_len();
        let off = self.offsets[k];
        let x = self.sources[k].row(j);
        for r in 0..d {
            let row = &mut slab[r * p_len..(r + 1) * p_len];
            for c in 0..h {
                row[off + r * h + c] += x[c];
            }
            row[off + d * h + r] += 1.0;
        }
    }
}

/// Which parameter sensitivities a solve should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JacobianMode {
    pub phi: bool,
    pub pi: bool,
}

/// Forward-mode sensitivity block: ∂·/∂param for atoms, and the matching
/// sensitivities of the Adam moment accumulators.
#[derive(Debug, Clone)]
struct JacTrack {
    z: Array3<f64>,
    m: Array3<f64>,
    v: Array3<f64>,
}

impl JacTrack {
    fn zeros(m_g: usize, d: usize, q: usize) -> Self {
        Self {
            z: Array3::zeros((m_g, d, q)),
            m: Array3::zeros((m_g, d, q)),
            v: Array3::zeros((m_g, d, q)),
        }
    }
}

/// Barycenter atoms together with Adam moments and optional parameter
/// sensitivities, advanced one iteration at a time.
#[derive(Debug, Clone)]
pub struct BarycenterState {
    z: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
    t: usize,
    jac_phi: Option<JacTrack>,
    jac_pi: Option<JacTrack>,
}

impl BarycenterState {
    /// Fresh state at t = 0: moments and sensitivities all zero.
    pub fn new(init: Array2<f64>, phi_len: Option<usize>, track_pi: Option<usize>) -> Result<Self> {
        if init.nrows() == 0 || init.ncols() == 0 {
            return Err(MddrError::invalid("barycenter state needs at least one atom and dimension"));
        }
        if init.iter().any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("barycenter init atoms must be finite"));
        }
        let (m_g, d) = init.dim();
        Ok(Self {
            m: Array2::zeros((m_g, d)),
            v: Array2::zeros((m_g, d)),
            t: 0,
            jac_phi: phi_len.map(|p| JacTrack::zeros(m_g, d, p)),
            jac_pi: track_pi.map(|k| JacTrack::zeros(m_g, d, k)),
            z: init,
        })
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn first_moment(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }

    pub fn second_moment(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn jac_phi(&self) -> Option<&Array3<f64>> {
        self.jac_phi.as_ref().map(|j| &j.z)
    }

    pub fn jac_pi(&self) -> Option<&Array3<f64>> {
        self.jac_pi.as_ref().map(|j| &j.z)
    }

    /// Seeds ∂z⁰/∂φ, for initializations that are themselves push-forward
    /// atoms and therefore move with the parameters.
    pub fn seed_jac_phi(&mut self, init_jac: Array3<f64>) -> Result<()> {
        match self.jac_phi.as_mut() {
            Some(track) if track.z.dim() == init_jac.dim() => {
                track.z = init_jac;
                Ok(())
            }
            Some(track) => Err(MddrError::invalid(format!(
                "jacobian seed shape {:?} does not match tracked shape {:?}",
                init_jac.dim(),
                track.z.dim()
            ))),
            None => Err(MddrError::invalid("state does not track phi sensitivities")),
        }
    }
}

/// Support-point gradient of the barycenter objective, with optional
/// sensitivities of that gradient with respect to the push-forward
/// parameters and the weights.
#[derive(Debug, Clone)]
pub struct SupportGradients {
    /// h_ℓ = ∇_{z_ℓ} Σ_k π_k·SW_p^p(G, G_k), Monte Carlo over `proj`.
    pub h: Array2<f64>,
    /// ∂h/∂φ (M_G × d × P), when requested.
    pub dh_dphi: Option<Array3<f64>>,
    /// ∂h/∂π (M_G × d × K), when requested.
    pub dh_dpi: Option<Array3<f64>>,
}

fn validate_family(
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    d: usize,
) -> Result<()> {
    if marginals.is_empty() {
        return Err(MddrError::invalid("need at least one marginal"));
    }
    if marginals.len() != weights.len() {
        return Err(MddrError::dim(marginals.len(), weights.len(), "weights per marginal"));
    }
    for (k, g) in marginals.iter().enumerate() {
        if g.dim() != d {
            return Err(MddrError::dim(d, g.dim(), format!("marginal {k} dimension")));
        }
    }
    Ok(())
}

/// Weighted barycenter objective Σ_k π_k·SW_p^p(z, G_k) under `proj`.
pub fn swb_objective(
    z: &EmpiricalDistribution,
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    proj: &ProjectionSet,
    p: f64,
) -> Result<f64> {
    validate_family(marginals, weights, z.dim())?;
    if proj.dim() != z.dim() {
        return Err(MddrError::dim(z.dim(), proj.dim(), "projection dimension"));
    }
    let mut scratch = SwScratch::new(z.len(), marginals.iter().map(|g| g.len()).max().unwrap());
    let mut total = 0.0;
    for (g_k, &pi_k) in marginals.iter().zip(weights.as_slice()) {
        let mut acc = 0.0;
        for theta in proj.directions().rows() {
            acc += sw_term(&z.points(), &g_k.points(), theta, p, &mut scratch);
        }
        total += pi_k * acc / proj.len() as f64;
    }
    Ok(total)
}

/// Gradient of [`swb_objective`] with respect to the barycenter atoms, with
/// the per-projection transport plans held fixed.
pub fn swb_grad_support(
    z: &EmpiricalDistribution,
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    proj: &ProjectionSet,
    p: f64,
) -> Result<Array2<f64>> {
    validate_family(marginals, weights, z.dim())?;
    if proj.dim() != z.dim() {
        return Err(MddrError::dim(z.dim(), proj.dim(), "projection dimension"));
    }
    let mut grad = Array2::zeros((z.len(), z.dim()));
    let mut scratch = SwScratch::new(z.len(), marginals.iter().map(|g| g.len()).max().unwrap());
    let inv_l = 1.0 / proj.len() as f64;
    for (g_k, &pi_k) in marginals.iter().zip(weights.as_slice()) {
        for theta in proj.directions().rows() {
            accumulate_sw_grad(&z.points(), &g_k.points(), theta, p, pi_k * inv_l, &mut grad, &mut scratch);
        }
    }
    Ok(grad)
}

/// Inputs enabling gradient sensitivities in [`support_gradients`].
pub struct SensitivityInputs<'l, 'j> {
    /// Push-forward layout plus the current ∂z/∂φ, enabling ∂h/∂φ.
    pub phi: Option<(&'l PushforwardLayout<'l>, &'j Array3<f64>)>,
    /// Current ∂z/∂π, enabling ∂h/∂π.
    pub pi: Option<&'j Array3<f64>>,
}

impl SensitivityInputs<'_, '_> {
    pub fn none() -> Self {
        SensitivityInputs { phi: None, pi: None }
    }
}

/// Computes h and, when requested, ∂h/∂φ and ∂h/∂π in a single pass over the
/// per-projection transport plans, so all outputs share the same realized
/// directions and plans.
pub fn support_gradients(
    z: &ArrayView2<'_, f64>,
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    proj: &ProjectionSet,
    p: f64,
    sens: &SensitivityInputs<'_, '_>,
) -> Result<SupportGradients> {
    let (m_g, d) = z.dim();
    if proj.dim() != d {
        return Err(MddrError::dim(d, proj.dim(), "projection dimension"));
    }
    let k_total = marginals.len();
    if k_total != weights.len() {
        return Err(MddrError::dim(k_total, weights.len(), "weights per marginal"));
    }
    for (k, g) in marginals.iter().enumerate() {
        if g.dim() != d {
            return Err(MddrError::dim(d, g.dim(), format!("marginal {k} dimension")));
        }
    }
    let phi_len = match sens.phi {
        Some((layout, jac_z)) => {
            if layout.num_marginals() != k_total {
                return Err(MddrError::dim(k_total, layout.num_marginals(), "pushforward layout blocks"));
            }
            for (k, g) in marginals.iter().enumerate() {
                if layout.source(k).nrows() != g.len() {
                    return Err(MddrError::dim(
                        g.len(),
                        layout.source(k).nrows(),
                        format!("source atoms of marginal {k}"),
                    ));
                }
            }
            if jac_z.dim() != (m_g, d, layout.param_len()) {
                return Err(MddrError::invalid(format!(
                    "jac_z_phi shape {:?} does not match (M, d, P) = ({m_g}, {d}, {})",
                    jac_z.dim(),
                    layout.param_len()
                )));
            }
            Some(layout.param_len())
        }
        None => None,
    };
    if let Some(jac_z_pi) = sens.pi {
        if jac_z_pi.dim() != (m_g, d, k_total) {
            return Err(MddrError::invalid(format!(
                "jac_z_pi shape {:?} does not match (M, d, K) = ({m_g}, {d}, {k_total})",
                jac_z_pi.dim()
            )));
        }
    }

    let mut h = Array2::<f64>::zeros((m_g, d));
    let mut dh_dphi = phi_len.map(|p_len| Array3::<f64>::zeros((m_g, d, p_len)));
    let mut dh_dpi = sens.pi.map(|_| Array3::<f64>::zeros((m_g, d, k_total)));

    let max_marg = marginals.iter().map(|g| g.len()).max().unwrap();
    let mut scratch = SwScratch::new(m_g, max_marg);
    // θᵀ-contracted atom sensitivities, rebuilt per direction.
    let mut tz_phi = phi_len.map(|p_len| vec![0.0; m_g * p_len]);
    let mut tz_pi = sens.pi.map(|_| vec![0.0; m_g * k_total]);

    let inv_l = 1.0 / proj.len() as f64;
    let pi = weights.as_slice();
    let curvature = p * (p - 1.0);

    for theta in proj.directions().rows() {
        let th = theta.as_slice().expect("standard layout");
        if let (Some(buf), Some((_, jac_z))) = (tz_phi.as_mut(), sens.phi) {
            contract_theta(jac_z, th, buf);
        }
        if let (Some(buf), Some(jac_z)) = (tz_pi.as_mut(), sens.pi) {
            contract_theta(jac_z, th, buf);
        }
        scratch.proj1.resize(m_g, 0.0);
        project_into(z, theta, &mut scratch.proj1);
        argsort_into(&scratch.proj1, &mut scratch.idx1);

        for (k, g_k) in marginals.iter().enumerate() {
            let m_k = g_k.len();
            scratch.proj2.resize(m_k, 0.0);
            project_into(&g_k.points(), theta, &mut scratch.proj2);
            argsort_into(&scratch.proj2, &mut scratch.idx2);
            let denom = (m_g * m_k) as f64;
            let h_slab = h.as_slice_mut().expect("standard layout");
            let mut phi_view = dh_dphi.as_mut().map(|a| a.as_slice_mut().expect("layout"));
            let mut pi_view = dh_dpi.as_mut().map(|a| a.as_slice_mut().expect("layout"));

            nw_walk(m_g, m_k, |a, b, units| {
                let l_atom = scratch.idx1[a];
                let j_atom = scratch.idx2[b];
                let s = scratch.proj1[l_atom] - scratch.proj2[j_atom];
                let gamma = units as f64 / denom;
                // First-order transport weight p·γ·|s|^{p-2}·s, and the
                // curvature weight p(p-1)·γ·|s|^{p-2}.
                let first = p * gamma * signed_pow(s, p) * inv_l;
                let curv = curvature * gamma * abs_pow_pm2(s, p) * inv_l;

                if first != 0.0 {
                    let w = pi[k] * first;
                    let row = &mut h_slab[l_atom * d..(l_atom + 1) * d];
                    for (slot, t) in row.iter_mut().zip(th) {
                        *slot += w * t;
                    }
                }
                if let (Some(jh), Some(tz)) = (pi_view.as_deref_mut(), tz_pi.as_deref()) {
                    accumulate_pi_entry(
                        jh, tz, th, d, k_total, l_atom, k, first, pi[k] * curv,
                    );
                }
                if let (Some(jh), Some(tz), Some((layout, _))) =
                    (phi_view.as_deref_mut(), tz_phi.as_deref(), sens.phi)
                {
                    accumulate_phi_entry(
                        jh, tz, th, d, layout, l_atom, k, j_atom, pi[k] * curv,
                    );
                }
            });
        }
    }

    Ok(SupportGradients { h, dh_dphi, dh_dpi })
}

/// tz[ℓ, q] = Σ_a θ[a]·jac[ℓ, a, q].
fn contract_theta(jac: &Array3<f64>, theta: &[f64], out: &mut [f64]) {
    let (m_g, d, q) = jac.dim();
    debug_assert_eq!(out.len(), m_g * q);
    let slab = jac.as_slice().expect("standard layout");
    out.fill(0.0);
    for l_atom in 0..m_g {
        let dst = &mut out[l_atom * q..(l_atom + 1) * q];
        for (a, &t) in theta.iter().enumerate().take(d) {
            if t == 0.0 {
                continue;
            }
            let src = &slab[(l_atom * d + a) * q..(l_atom * d + a + 1) * q];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_pi_entry(
    jh: &mut [f64],
    tz: &[f64],
    theta: &[f64],
    d: usize,
    k_total: usize,
    l_atom: usize,
    k: usize,
    first: f64,
    curv: f64,
) {
    let base = l_atom * d * k_total;
    let tz_row = &tz[l_atom * k_total..(l_atom + 1) * k_total];
    for (a, &t) in theta.iter().enumerate() {
        let row = &mut jh[base + a * k_total..base + (a + 1) * k_total];
        // Direct term: ∂/∂π_k picks out marginal k's unweighted gradient.
        row[k] += first * t;
        if curv != 0.0 {
            let ct = curv * t;
            for (slot, &z_sens) in row.iter_mut().zip(tz_row) {
                *slot += ct * z_sens;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_phi_entry(
    jh: &mut [f64],
    tz: &[f64],
    theta: &[f64],
    d: usize,
    layout: &PushforwardLayout<'_>,
    l_atom: usize,
    k: usize,
    j_atom: usize,
    curv: f64,
) {
    if curv == 0.0 {
        return;
    }
    let p_len = layout.param_len();
    let base = l_atom * d * p_len;
    let tz_row = &tz[l_atom * p_len..(l_atom + 1) * p_len];
    let src = layout.source(k);
    let h_k = src.ncols();
    let off = layout.block_offset(k);
    let x = src.row(j_atom);
    for (a, &ta) in theta.iter().enumerate().take(d) {
        let ct = curv * ta;
        if ct == 0.0 {
            continue;
        }
        let row = &mut jh[base + a * p_len..base + (a + 1) * p_len];
        // Dense part: + curv·θ_a·(θᵀ ∂z_ℓ/∂φ).
        for (slot, &z_sens) in row.iter_mut().zip(tz_row) {
            *slot += ct * z_sens;
        }
        // Sparse part: − curv·θ_a·(θᵀ ∂f_k(x_j)/∂φ), block k only.
        for (r, &tr) in theta.iter().enumerate().take(d) {
            let c = ct * tr;
            if c == 0.0 {
                continue;
            }
            let a_row = &mut row[off + r * h_k..off + (r + 1) * h_k];
            for (slot, &xc) in a_row.iter_mut().zip(x.iter()) {
                *slot -= c * xc;
            }
            row[off + d * h_k + r] -= c;
        }
    }
}

/// One Adam update on the barycenter atoms, with bias-corrected moments:
/// m ← β₁m + (1−β₁)h, v ← β₂v + (1−β₂)h², z ← z − η·m̂/(√v̂ + ε).
///
/// When the state carries sensitivities, their recursion advances with the
/// exact partials of this update: ∂z'/∂z = I, ∂m̂/∂h = (1−β₁)/(1−β₁ᵗ)·I,
/// and the (√v̂ + ε)⁻¹ chain through ∂v̂/∂h = 2(1−β₂)/(1−β₂ᵗ)·diag(h),
/// applied to the carried moment sensitivities.
pub fn adam_step(state: &mut BarycenterState, grads: &SupportGradients, cfg: &SwbConfig) -> Result<()> {
    if grads.h.dim() != state.z.dim() {
        return Err(MddrError::invalid(format!(
            "gradient shape {:?} does not match state shape {:?}",
            grads.h.dim(),
            state.z.dim()
        )));
    }
    if grads.h.iter().any(|v| !v.is_finite()) {
        return Err(MddrError::numerical("adam_step", "non-finite gradient entries"));
    }
    if state.jac_phi.is_some() != grads.dh_dphi.is_some()
        || state.jac_pi.is_some() != grads.dh_dpi.is_some()
    {
        return Err(MddrError::invalid(
            "gradient sensitivities must match the state's tracked sensitivities",
        ));
    }

    let t_new = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t_new as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t_new as i32);
    let (m_g, d) = state.z.dim();
    let eta = cfg.step_size;

    for l_atom in 0..m_g {
        for a in 0..d {
            let g = grads.h[[l_atom, a]];
            let m = cfg.beta1 * state.m[[l_atom, a]] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * state.v[[l_atom, a]] + (1.0 - cfg.beta2) * g * g;
            state.m[[l_atom, a]] = m;
            state.v[[l_atom, a]] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let s = v_hat.sqrt() + cfg.epsilon;
            state.z[[l_atom, a]] -= eta * m_hat / s;

            let advance = |track: &mut JacTrack, jh: &Array3<f64>| {
                let q = track.z.dim().2;
                let idx = (l_atom * d + a) * q;
                let jh_slab = &jh.as_slice().expect("layout")[idx..idx + q];
                let jm = &mut track.m.as_slice_mut().expect("layout")[idx..idx + q];
                let jv = &mut track.v.as_slice_mut().expect("layout")[idx..idx + q];
                let jz = &mut track.z.as_slice_mut().expect("layout")[idx..idx + q];
                for qq in 0..q {
                    jm[qq] = cfg.beta1 * jm[qq] + (1.0 - cfg.beta1) * jh_slab[qq];
                    jv[qq] = cfg.beta2 * jv[qq] + 2.0 * (1.0 - cfg.beta2) * g * jh_slab[qq];
                    let mut step = jm[qq] / (bc1 * s);
                    if v_hat > 0.0 {
                        step -= m_hat * jv[qq] / (bc2 * 2.0 * v_hat.sqrt() * s * s);
                    }
                    jz[qq] -= eta * step;
                }
            };
            if let (Some(track), Some(jh)) = (state.jac_phi.as_mut(), grads.dh_dphi.as_ref()) {
                advance(track, jh);
            }
            if let (Some(track), Some(jh)) = (state.jac_pi.as_mut(), grads.dh_dpi.as_ref()) {
                advance(track, jh);
            }
        }
    }
    state.t = t_new;
    Ok(())
}

/// Draws M_G initial atoms from the π-mixture of marginal atoms: sample a
/// marginal k ∝ π_k, then one of its atoms uniformly. Atoms are taken in
/// lexicographic coordinate order so the draw is invariant to atom
/// permutations of the marginals. Returns the atoms and, per slot, the
/// marginal index and the original row of the chosen atom.
pub fn mixture_init(
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    m_g: usize,
    seed: u64,
) -> (Array2<f64>, Vec<(usize, usize)>) {
    let d = marginals[0].dim();
    let mut rng = stream_rng(seed, &[tag::SOLVER_INIT]);
    let lex_order: Vec<Vec<usize>> = marginals
        .iter()
        .map(|g| {
            let pts = g.points();
            let mut idx: Vec<usize> = (0..pts.nrows()).collect();
            idx.sort_by(|&a, &b| {
                let (ra, rb) = (pts.row(a), pts.row(b));
                ra.iter()
                    .zip(rb.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            idx
        })
        .collect();
    let mut atoms = Array2::<f64>::zeros((m_g, d));
    let mut provenance = Vec::with_capacity(m_g);
    for slot in 0..m_g {
        let u: f64 = rng.gen();
        let mut k = weights.len() - 1;
        let mut acc = 0.0;
        for (kk, &w) in weights.as_slice().iter().enumerate() {
            acc += w;
            if u < acc {
                k = kk;
                break;
            }
        }
        let pos = rng.gen_range(0..marginals[k].len());
        let row = lex_order[k][pos];
        atoms.row_mut(slot).assign(&marginals[k].points().row(row));
        provenance.push((k, row));
    }
    (atoms, provenance)
}

/// Options for a full solve.
#[derive(Default)]
pub struct SolveOptions<'a> {
    /// Explicit initial atoms; defaults to a seeded π-mixture draw.
    pub init: Option<Array2<f64>>,
    /// Seed for ∂z⁰/∂φ when the initial atoms move with the parameters.
    pub init_jac_phi: Option<Array3<f64>>,
    /// Record a per-iteration objective trace on a held-out projection set.
    pub record_trace: bool,
    /// Held-out projections for the trace.
    pub trace_projections: usize,
    /// Push-forward layout; enables ∂z/∂φ tracking.
    pub pushforwards: Option<&'a PushforwardLayout<'a>>,
    /// Track ∂z/∂π.
    pub track_pi: bool,
}

/// A completed solve.
#[derive(Debug, Clone)]
pub struct SwbRun {
    pub barycenter: EmpiricalDistribution,
    /// Held-out objective at iterations 0..=T (empty unless requested).
    pub trace: Vec<f64>,
    pub jac_phi: Option<Array3<f64>>,
    pub jac_pi: Option<Array3<f64>>,
}

const DIVERGENCE_BOUND: f64 = 1e8;

/// Runs T Adam iterations from the initial atoms, resampling `cfg.projections`
/// directions each iteration from a counter-based stream keyed by
/// (cfg.seed, iteration). The same realized directions drive the support
/// gradient and the sensitivity updates within an iteration.
pub fn solve(
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    cfg: &SwbConfig,
    opts: SolveOptions<'_>,
) -> Result<SwbRun> {
    cfg.validate()?;
    let d = marginals
        .first()
        .ok_or_else(|| MddrError::invalid("need at least one marginal"))?
        .dim();
    validate_family(marginals, weights, d)?;
    let m_g = cfg
        .atoms
        .unwrap_or_else(|| marginals.iter().map(|g| g.len()).max().unwrap());

    let init = match opts.init {
        Some(init) => {
            if init.ncols() != d {
                return Err(MddrError::dim(d, init.ncols(), "init atom dimension"));
            }
            init
        }
        None => mixture_init(marginals, weights, m_g, cfg.seed).0,
    };
    let phi_len = opts.pushforwards.map(|l| l.param_len());
    let mut state = BarycenterState::new(init, phi_len, opts.track_pi.then_some(weights.len()))?;
    if let Some(seed_jac) = opts.init_jac_phi {
        state.seed_jac_phi(seed_jac)?;
    }

    let trace_proj = if opts.record_trace {
        let l = opts.trace_projections.max(1);
        Some(sample_projections(l, d, derive_seed(cfg.seed, &[tag::SOLVER_TRACE]))?)
    } else {
        None
    };
    let mut trace = Vec::new();
    let z_dist = |z: &Array2<f64>| EmpiricalDistribution::new(z.clone());
    if let Some(proj) = &trace_proj {
        trace.push(swb_objective(&z_dist(&state.z)?, marginals, weights, proj, cfg.p)?);
    }

    for t in 1..=cfg.iterations {
        let proj = sample_projections(
            cfg.projections,
            d,
            derive_seed(cfg.seed, &[tag::SOLVER_ITER, t as u64]),
        )?;
        // The sensitivity pass reads the current state tensors while the Adam
        // step mutates them, so gradients are computed first.
        let grads = {
            let sens = SensitivityInputs {
                phi: opts
                    .pushforwards
                    .map(|layout| (layout, state.jac_phi().expect("tracked"))),
                pi: opts.track_pi.then(|| state.jac_pi().expect("tracked")),
            };
            let z_view = state.z.view();
            support_gradients(&z_view, marginals, weights, &proj, cfg.p, &sens)?
        };
        adam_step(&mut state, &grads, cfg)?;
        if state.z.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(MddrError::SolverDiverged { iteration: t });
        }
        if let Some(proj) = &trace_proj {
            trace.push(swb_objective(&z_dist(&state.z)?, marginals, weights, proj, cfg.p)?);
        }
    }

    Ok(SwbRun {
        barycenter: EmpiricalDistribution::new(state.z.clone())?,
        trace,
        jac_phi: state.jac_phi.take().map(|j| j.z),
        jac_pi: state.jac_pi.take().map(|j| j.z),
    })
}

/// Solve without sensitivity tracking, returning the barycenter and the
/// held-out objective trace.
pub fn swb_solve(
    marginals: &[EmpiricalDistribution],
    weights: &BarycenterWeights,
    cfg: &SwbConfig,
    init: Option<Array2<f64>>,
) -> Result<(EmpiricalDistribution, Vec<f64>)> {
    let run = solve(
        marginals,
        weights,
        cfg,
        SolveOptions {
            init,
            record_trace: true,
            trace_projections: 64,
            ..SolveOptions::default()
        },
    )?;
    Ok((run.barycenter, run.trace))
}
