//! The regression model: linear push-forwards of predictor distributions,
//! the fitted barycenter, the generalized likelihood, priors, and the
//! simplex reparameterization of the barycenter weights.
//!
//! A model with K predictors carries one linear map per predictor
//! (f_k(x) = A_k x + b_k) and an unconstrained weight vector ϖ of length
//! K−1 whose anchored softmax gives the simplex weights π. The flat
//! parameter vector φ concatenates, for k = 1..K, A_k in row-major order
//! followed by b_k.

use ndarray::{Array1, Array2, Array3, ArrayView2, s};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{MddrError, Result};
use crate::rng::{derive_seed, tag};
use crate::sliced_ot::{sample_projections, sw_distance_pp, EmpiricalDistribution, ProjectionSet};
use crate::swb::{
    mixture_init, solve, BarycenterWeights, PushforwardLayout, SolveOptions, SwbConfig,
};

/// One linear regression map f(x) = A x + b from predictor space (dim h)
/// into response space (dim d).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    a: Array2<f64>,
    b: Array1<f64>,
}

impl LinearMap {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(MddrError::dim(a.nrows(), b.len(), "intercept length"));
        }
        if a.ncols() == 0 || a.nrows() == 0 {
            return Err(MddrError::invalid("linear map needs positive dimensions"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("linear map entries must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            a: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: Array2::eye(dim),
            b: Array1::zeros(dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn coefficients(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn intercept(&self) -> &Array1<f64> {
        &self.b
    }

    /// Number of flat parameters d·h + d.
    pub fn param_len(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// Push-forward of an empirical distribution through a linear map:
/// atoms A x_j + b, same count.
pub fn pushforward(map: &LinearMap, f: &EmpiricalDistribution) -> Result<EmpiricalDistribution> {
    if f.dim() != map.in_dim() {
        return Err(MddrError::dim(map.in_dim(), f.dim(), "pushforward input dimension"));
    }
    let mut out = f.points().dot(&map.a.t());
    for mut row in out.rows_mut() {
        row += &map.b;
    }
    EmpiricalDistribution::new(out)
}

/// Full parameter state: K linear maps (jointly the flat vector φ) plus the
/// unconstrained weight vector ϖ of length K−1.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    maps: Vec<LinearMap>,
    omega: Vec<f64>,
}

impl ModelParams {
    pub fn new(maps: Vec<LinearMap>, omega: Vec<f64>) -> Result<Self> {
        if maps.is_empty() {
            return Err(MddrError::invalid("model needs at least one predictor map"));
        }
        let d = maps[0].out_dim();
        if maps.iter().any(|m| m.out_dim() != d) {
            return Err(MddrError::invalid("all maps must share the response dimension"));
        }
        if omega.len() + 1 != maps.len() {
            return Err(MddrError::dim(maps.len() - 1, omega.len(), "omega length"));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("omega entries must be finite"));
        }
        Ok(Self { maps, omega })
    }

    pub fn num_predictors(&self) -> usize {
        self.maps.len()
    }

    pub fn response_dim(&self) -> usize {
        self.maps[0].out_dim()
    }

    pub fn maps(&self) -> &[LinearMap] {
        &self.maps
    }

    pub fn map(&self, k: usize) -> &LinearMap {
        &self.maps[k]
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn set_omega(&mut self, omega: Vec<f64>) -> Result<()> {
        if omega.len() != self.omega.len() {
            return Err(MddrError::dim(self.omega.len(), omega.len(), "omega length"));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("omega entries must be finite"));
        }
        self.omega = omega;
        Ok(())
    }

    /// Simplex weights π(ϖ).
    pub fn weights(&self) -> BarycenterWeights {
        BarycenterWeights::new(simplex_forward(&self.omega)).expect("softmax output is simplex")
    }

    /// Total flat parameter length P.
    pub fn phi_len(&self) -> usize {
        self.maps.iter().map(LinearMap::param_len).sum()
    }

    /// Flattens φ: per k, A_k row-major then b_k.
    pub fn flatten_phi(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phi_len());
        for m in &self.maps {
            out.extend(m.a.iter());
            out.extend(m.b.iter());
        }
        out
    }

    /// Writes a flat φ vector back into the maps. Exact inverse of
    /// [`Self::flatten_phi`].
    pub fn set_phi(&mut self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.phi_len() {
            return Err(MddrError::dim(self.phi_len(), phi.len(), "phi length"));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(MddrError::invalid("phi entries must be finite"));
        }
        let mut off = 0;
        for m in &mut self.maps {
            let (d, h) = (m.a.nrows(), m.a.ncols());
            for r in 0..d {
                for c in 0..h {
                    m.a[[r, c]] = phi[off + r * h + c];
                }
            }
            for r in 0..d {
                m.b[r] = phi[off + d * h + r];
            }
            off += d * h + d;
        }
        Ok(())
    }
}

/// One data point: K predictor distributions and a response distribution.
#[derive(Debug, Clone)]
pub struct Observation {
    pub predictors: Vec<EmpiricalDistribution>,
    pub response: EmpiricalDistribution,
}

impl Observation {
    pub fn new(predictors: Vec<EmpiricalDistribution>, response: EmpiricalDistribution) -> Result<Self> {
        if predictors.is_empty() {
            return Err(MddrError::invalid("observation needs at least one predictor"));
        }
        Ok(Self { predictors, response })
    }
}

/// Generalized-likelihood settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LikelihoodConfig {
    /// Loss temperature w in exp(−w·loss).
    pub w: f64,
    /// Transport order p.
    pub p: f64,
    /// Projections used to evaluate the likelihood's sliced distance.
    pub projections: usize,
    /// Barycenter solver settings.
    pub swb: SwbConfig,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            w: 10.0,
            p: 2.0,
            projections: 100,
            swb: SwbConfig::default(),
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(MddrError::invalid("likelihood.w must be > 0"));
        }
        if self.p < 1.0 {
            return Err(MddrError::invalid("likelihood.p must be >= 1"));
        }
        if self.projections == 0 {
            return Err(MddrError::invalid("likelihood.projections must be >= 1"));
        }
        self.swb.validate()
    }
}

/// Prior settings: Laplace(0, scale) on coefficient entries, Normal(0,
/// variance) on intercepts, and a Dirichlet-style concentration on the
/// weights in ϖ-space.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PriorConfig {
    pub laplace_scale: f64,
    pub normal_variance: f64,
    pub alpha: Vec<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            laplace_scale: 1.0,
            normal_variance: 1e3,
            alpha: vec![0.01; 3],
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, num_predictors: usize) -> Result<()> {
        if !(self.laplace_scale > 0.0) {
            return Err(MddrError::invalid("prior.laplace_scale must be > 0"));
        }
        if !(self.normal_variance > 0.0) {
            return Err(MddrError::invalid("prior.normal_variance must be > 0"));
        }
        if self.alpha.len() != num_predictors {
            return Err(MddrError::dim(num_predictors, self.alpha.len(), "prior.alpha length"));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(MddrError::invalid("prior.alpha entries must be > 0"));
        }
        Ok(())
    }
}

/// Anchored softmax: π_k = e^{ϖ_k}/(1 + Σ e^{ϖ_j}) for k < K, with the last
/// weight as the anchor π_K = 1/(1 + Σ e^{ϖ_j}). Stable for |ϖ| up to ±500.
pub fn simplex_forward(omega: &[f64]) -> Vec<f64> {
    let k = omega.len() + 1;
    let shift = omega.iter().fold(0.0_f64, |m, &v| m.max(v));
    let mut out = Vec::with_capacity(k);
    let mut denom = (-shift).exp();
    for &v in omega {
        let e = (v - shift).exp();
        out.push(e);
        denom += e;
    }
    out.push((-shift).exp());
    for v in &mut out {
        *v /= denom;
    }
    out
}

/// Inverse of [`simplex_forward`]: ϖ_k = log(π_k/π_K). Rejects π with any
/// zero entry.
pub fn simplex_inverse(pi: &[f64]) -> Result<Vec<f64>> {
    if pi.is_empty() {
        return Err(MddrError::invalid("simplex_inverse needs at least one weight"));
    }
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(MddrError::invalid("simplex_inverse requires strictly positive weights"));
    }
    let anchor = pi[pi.len() - 1];
    Ok(pi[..pi.len() - 1].iter().map(|&v| (v / anchor).ln()).collect())
}

/// Pulls a gradient with respect to π back to ϖ through the softmax
/// Jacobian: grad_ϖ_k = Σ_{j<K} g_j·π_j(δ_jk − π_k) − g_K·π_K·π_k.
pub fn simplex_chain_rule(grad_pi: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    if grad_pi.len() != pi.len() {
        return Err(MddrError::dim(pi.len(), grad_pi.len(), "grad_pi length"));
    }
    let k = pi.len();
    let dot: f64 = grad_pi.iter().zip(pi).map(|(g, w)| g * w).sum();
    Ok((0..k - 1).map(|j| pi[j] * (grad_pi[j] - dot)).collect())
}

/// A fitted response distribution with optional parameter sensitivities of
/// its atoms.
#[derive(Debug, Clone)]
pub struct FittedDistribution {
    pub atoms: EmpiricalDistribution,
    /// ∂z/∂φ (M × d × P), present when requested.
    pub jac_phi: Option<Array3<f64>>,
    /// ∂z/∂π (M × d × K), present when requested.
    pub jac_pi: Option<Array3<f64>>,
}

/// Which sensitivities [`fitted_distribution`] should return.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackJacobians {
    pub phi: bool,
    pub pi: bool,
}

impl TrackJacobians {
    pub fn none() -> Self {
        Self { phi: false, pi: false }
    }

    pub fn phi() -> Self {
        Self { phi: true, pi: false }
    }

    pub fn pi() -> Self {
        Self { phi: false, pi: true }
    }
}

fn check_observation(params: &ModelParams, obs: &Observation) -> Result<()> {
    if obs.predictors.len() != params.num_predictors() {
        return Err(MddrError::dim(
            params.num_predictors(),
            obs.predictors.len(),
            "predictors per observation",
        ));
    }
    for (k, (f, m)) in obs.predictors.iter().zip(params.maps()).enumerate() {
        if f.dim() != m.in_dim() {
            return Err(MddrError::dim(m.in_dim(), f.dim(), format!("predictor {k} dimension")));
        }
    }
    if obs.response.dim() != params.response_dim() {
        return Err(MddrError::dim(
            params.response_dim(),
            obs.response.dim(),
            "response dimension",
        ));
    }
    Ok(())
}

/// The fitted response: the weighted barycenter of the K push-forwarded
/// predictors. With one predictor the barycenter of a single marginal is the
/// marginal itself, so the push-forward is returned exactly (and its
/// sensitivities are the push-forward Jacobians).
///
/// `solver_seed` keys the solver's initialization and per-iteration
/// projection streams; callers derive it per observation and per evaluation
/// so that repeated evaluations are reproducible.
pub fn fitted_distribution(
    params: &ModelParams,
    obs: &Observation,
    cfg: &LikelihoodConfig,
    track: TrackJacobians,
    solver_seed: u64,
) -> Result<FittedDistribution> {
    check_observation(params, obs)?;
    let d = params.response_dim();
    let k_total = params.num_predictors();

    if k_total == 1 {
        let fitted = pushforward(&params.maps[0], &obs.predictors[0])?;
        let m = fitted.len();
        let jac_phi = if track.phi {
            let layout = PushforwardLayout::new(vec![obs.predictors[0].points()], d);
            let mut jac = Array3::<f64>::zeros((m, d, layout.param_len()));
            for j in 0..m {
                let slab = jac.slice_mut(s![j, .., ..]).into_slice().expect("layout");
                layout.add_pushforward_jacobian(0, j, slab);
            }
            Some(jac)
        } else {
            None
        };
        let jac_pi = track.pi.then(|| Array3::zeros((m, d, 1)));
        return Ok(FittedDistribution { atoms: fitted, jac_phi, jac_pi });
    }

    let pushforwards: Vec<EmpiricalDistribution> = params
        .maps
        .iter()
        .zip(&obs.predictors)
        .map(|(m, f)| pushforward(m, f))
        .collect::<Result<_>>()?;
    let weights = params.weights();
    let mut swb_cfg = cfg.swb.clone();
    swb_cfg.seed = solver_seed;
    let m_g = swb_cfg
        .atoms
        .unwrap_or_else(|| pushforwards.iter().map(|g| g.len()).max().unwrap());

    let source_views: Vec<_> = obs.predictors.iter().map(|f| f.points()).collect();
    let layout = PushforwardLayout::new(source_views, d);

    // The initial atoms are drawn from the π-mixture of push-forward atoms,
    // so they move with φ; seed ∂z⁰/∂φ accordingly. The mixture's dependence
    // on π is a discrete selection, so ∂z⁰/∂π stays zero.
    let (init, provenance) = mixture_init(&pushforwards, &weights, m_g, solver_seed);
    let init_jac_phi = if track.phi {
        let mut jac = Array3::<f64>::zeros((m_g, d, layout.param_len()));
        for (slot, &(k, j)) in provenance.iter().enumerate() {
            let slab = jac.slice_mut(s![slot, .., ..]).into_slice().expect("layout");
            layout.add_pushforward_jacobian(k, j, slab);
        }
        Some(jac)
    } else {
        None
    };

    let run = solve(
        &pushforwards,
        &weights,
        &swb_cfg,
        SolveOptions {
            init: Some(init),
            init_jac_phi,
            pushforwards: track.phi.then_some(&layout),
            track_pi: track.pi,
            ..SolveOptions::default()
        },
    )?;
    Ok(FittedDistribution {
        atoms: run.barycenter,
        jac_phi: run.jac_phi,
        jac_pi: run.jac_pi,
    })
}

/// Generalized log-likelihood of one observation:
/// −w·SW_p^p(fitted, response) under `proj`. Always ≤ 0.
pub fn gen_log_lik_with(
    fitted: &EmpiricalDistribution,
    response: &EmpiricalDistribution,
    cfg: &LikelihoodConfig,
    proj: &ProjectionSet,
) -> Result<f64> {
    Ok(-cfg.w * sw_distance_pp(fitted, response, proj, cfg.p)?)
}

/// Convenience wrapper solving the fitted distribution and evaluating the
/// generalized log-likelihood in one call. `lik_seed` keys the likelihood
/// projection stream; `solver_seed` keys the barycenter solve.
pub fn gen_log_lik(
    params: &ModelParams,
    obs: &Observation,
    cfg: &LikelihoodConfig,
    lik_seed: u64,
    solver_seed: u64,
) -> Result<f64> {
    let fitted = fitted_distribution(params, obs, cfg, TrackJacobians::none(), solver_seed)?;
    let proj = sample_projections(cfg.projections, params.response_dim(), lik_seed)?;
    gen_log_lik_with(&fitted.atoms, &obs.response, cfg, &proj)
}

const WEIGHT_FLOOR: f64 = 1e-300;

fn floored_weights(params: &ModelParams) -> Vec<f64> {
    let mut pi = simplex_forward(&params.omega);
    for v in &mut pi {
        if *v < WEIGHT_FLOOR {
            log::warn!("barycenter weight underflow; clamping at {WEIGHT_FLOOR}");
            *v = WEIGHT_FLOOR;
        }
    }
    pi
}

/// Log-prior: Laplace on coefficients, Normal on intercepts, and the
/// concentration term Σ_k α_k·log π_k − log B(α) in ϖ-space. A model with a
/// single predictor has no free weights, so the weight term is dropped.
pub fn log_prior(params: &ModelParams, prior: &PriorConfig) -> Result<f64> {
    prior.validate(params.num_predictors())?;
    let scale = prior.laplace_scale;
    let var = prior.normal_variance;
    let mut total = 0.0;
    for m in params.maps() {
        for &a in m.a.iter() {
            total += -a.abs() / scale - (2.0 * scale).ln();
        }
        for &b in m.b.iter() {
            total += -b * b / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        }
    }
    if params.num_predictors() > 1 {
        let pi = floored_weights(params);
        let alpha_sum: f64 = prior.alpha.iter().sum();
        let log_beta: f64 =
            prior.alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(alpha_sum);
        total += pi
            .iter()
            .zip(&prior.alpha)
            .map(|(&w, &a)| a * w.ln())
            .sum::<f64>()
            - log_beta;
    }
    Ok(total)
}

/// Gradient of [`log_prior`]: (∂/∂φ, ∂/∂ϖ). Coefficient entries contribute
/// −sign(a)/scale, intercepts −b/variance, and the weight term
/// α_k − π_k·Σ_j α_j per ϖ coordinate.
pub fn log_prior_grad(params: &ModelParams, prior: &PriorConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    prior.validate(params.num_predictors())?;
    let scale = prior.laplace_scale;
    let var = prior.normal_variance;
    let mut grad_phi = Vec::with_capacity(params.phi_len());
    for m in params.maps() {
        for &a in m.a.iter() {
            grad_phi.push(-a.signum() / scale * if a == 0.0 { 0.0 } else { 1.0 });
        }
        for &b in m.b.iter() {
            grad_phi.push(-b / var);
        }
    }
    let grad_omega = if params.num_predictors() > 1 {
        let pi = floored_weights(params);
        let alpha_sum: f64 = prior.alpha.iter().sum();
        (0..params.omega.len())
            .map(|k| prior.alpha[k] - pi[k] * alpha_sum)
            .collect()
    } else {
        Vec::new()
    };
    Ok((grad_phi, grad_omega))
}

/// Contracts an (M × d × Q) atom sensitivity tensor with an (M × d) gradient
/// of a scalar with respect to the atoms, giving the length-Q gradient of
/// that scalar with respect to the parameters.
pub fn contract_atom_gradient(jac: &Array3<f64>, atom_grad: &Array2<f64>) -> Vec<f64> {
    let (m, d, q) = jac.dim();
    debug_assert_eq!(atom_grad.dim(), (m, d));
    let slab = jac.as_slice().expect("layout");
    let g = atom_grad.as_slice().expect("layout");
    let mut out = vec![0.0; q];
    for (row, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let src = &slab[row * q..(row + 1) * q];
        for (o, &s) in out.iter_mut().zip(src) {
            *o += gv * s;
        }
    }
    out
}

/// Pooled mean of every response atom across the observations: the intercept
/// used by the worst-case reference model.
pub fn pooled_response_mean(observations: &[Observation]) -> Result<Array1<f64>> {
    let first = observations
        .first()
        .ok_or_else(|| MddrError::invalid("need at least one observation"))?;
    let d = first.response.dim();
    let mut sum = Array1::<f64>::zeros(d);
    let mut count = 0usize;
    for obs in observations {
        if obs.response.dim() != d {
            return Err(MddrError::dim(d, obs.response.dim(), "response dimension"));
        }
        for row in obs.response.points().rows() {
            sum += &row;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Intercepts of the reference (intercept-only) model, one per predictor.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReferenceIntercepts(pub Vec<Vec<f64>>);

impl ReferenceIntercepts {
    /// The default reference: the pooled training response mean, identical
    /// across predictors.
    pub fn pooled(train: &[Observation], num_predictors: usize) -> Result<Self> {
        let mean = pooled_response_mean(train)?;
        Ok(Self(vec![mean.to_vec(); num_predictors]))
    }

    /// The uniform-weight barycenter of K point masses is the point mass at
    /// their mean, so the reference distribution needs no solver.
    pub fn reference_distribution(&self) -> Result<EmpiricalDistribution> {
        let k = self.0.len();
        if k == 0 {
            return Err(MddrError::invalid("reference needs at least one intercept"));
        }
        let d = self.0[0].len();
        let mut mean = vec![0.0; d];
        for b in &self.0 {
            if b.len() != d {
                return Err(MddrError::dim(d, b.len(), "reference intercept dimension"));
            }
            for (m, v) in mean.iter_mut().zip(b) {
                *m += v / k as f64;
            }
        }
        EmpiricalDistribution::new(Array2::from_shape_vec((1, d), mean).expect("shape"))
    }
}

/// Mean over observations of SW_p^p(fitted_i, G_i) / SW_p^p(reference, G_i).
/// 0 is a perfect fit; 1 matches the intercept-only reference.
///
/// Per-observation solver streams are derived from `solver_root`; the same
/// projection set `proj` evaluates both numerator and denominator.
pub fn relative_error(
    params: &ModelParams,
    observations: &[Observation],
    cfg: &LikelihoodConfig,
    reference: &ReferenceIntercepts,
    proj: &ProjectionSet,
    solver_root: u64,
) -> Result<f64> {
    if observations.is_empty() {
        return Err(MddrError::invalid("relative_error needs at least one observation"));
    }
    let reference_dist = reference.reference_distribution()?;
    let ratios: Vec<Result<f64>> = observations
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let solver_seed = derive_seed(solver_root, &[tag::OBSERVATION, i as u64]);
            let fitted =
                fitted_distribution(params, obs, cfg, TrackJacobians::none(), solver_seed)?;
            let num = sw_distance_pp(&fitted.atoms, &obs.response, proj, cfg.p)?;
            let den = sw_distance_pp(&reference_dist, &obs.response, proj, cfg.p)?;
            if den == 0.0 {
                return Err(MddrError::numerical(
                    format!("relative_error observation {i}"),
                    "degenerate reference: zero distance to response",
                ));
            }
            Ok(num / den)
        })
        .collect();
    let mut total = 0.0;
    for r in ratios {
        total += r?;
    }
    Ok(total / observations.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference;
    use ndarray::array;

    fn dist(points: Array2<f64>) -> EmpiricalDistribution {
        EmpiricalDistribution::new(points).unwrap()
    }

    #[test]
    fn pushforward_identity_and_constant() {
        let f = dist(array![[0.0, 1.0], [2.0, -1.0]]);
        let id = LinearMap::identity(2);
        assert_eq!(pushforward(&id, &f).unwrap().points(), f.points());

        let constant =
            LinearMap::new(Array2::zeros((2, 2)), array![3.0, -4.0]).unwrap();
        let out = pushforward(&constant, &f).unwrap();
        for row in out.points().rows() {
            assert_eq!(row.to_vec(), vec![3.0, -4.0]);
        }
    }

    #[test]
    fn pushforward_lifts_dimension() {
        let f = dist(array![[0.0], [1.0]]);
        let lift = LinearMap::new(array![[1.0], [0.0]], Array1::zeros(2)).unwrap();
        let out = pushforward(&lift, &f).unwrap();
        assert_eq!(out.points(), array![[0.0, 0.0], [1.0, 0.0]].view());
    }

    #[test]
    fn pushforward_rejects_dimension_mismatch() {
        let f = dist(array![[0.0, 1.0]]);
        let map = LinearMap::identity(3);
        assert!(pushforward(&map, &f).is_err());
    }

    #[test]
    fn phi_roundtrip_is_exact() {
        let maps = vec![
            LinearMap::new(array![[1.0, 2.0], [3.0, 4.0]], array![5.0, 6.0]).unwrap(),
            LinearMap::new(array![[7.0], [8.0]], array![9.0, 10.0]).unwrap(),
        ];
        let mut params = ModelParams::new(maps, vec![0.3]).unwrap();
        let phi = params.flatten_phi();
        assert_eq!(phi, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let mut shifted = phi.clone();
        for v in &mut shifted {
            *v += 0.5;
        }
        params.set_phi(&shifted).unwrap();
        assert_eq!(params.flatten_phi(), shifted);
    }

    #[test]
    fn softmax_uniform_at_zero() {
        let pi = simplex_forward(&[0.0, 0.0]);
        for v in &pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_weights_hand_check() {
        let pi = simplex_forward(&[3.0_f64.ln()]);
        assert!((pi[0] - 0.75).abs() < 1e-15);
        assert!((pi[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_stays_on_simplex_for_large_inputs() {
        for omega in [[500.0, -500.0], [-500.0, -500.0], [500.0, 500.0]] {
            let pi = simplex_forward(&omega);
            let sum: f64 = pi.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "omega {omega:?} sum {sum}");
            assert!(pi.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn simplex_roundtrip() {
        let mut rng = crate::rng::stream_rng(5, &[]);
        use rand::Rng;
        for _ in 0..100 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let pi: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let omega = simplex_inverse(&pi).unwrap();
            let back = simplex_forward(&omega);
            for (a, b) in pi.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simplex_inverse_rejects_zero() {
        assert!(simplex_inverse(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn chain_rule_constant_gradient_is_tangent() {
        let pi = simplex_forward(&[0.4, -0.2]);
        let g = simplex_chain_rule(&[2.5, 2.5, 2.5], &pi).unwrap();
        for v in g {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn chain_rule_hand_check() {
        let g = simplex_chain_rule(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        // Arbitrary smooth scalar of π composed with the softmax.
        let scalar = |pi: &[f64]| pi[0] * pi[0] + 2.0 * pi[1] * pi[2] + pi[2].powi(3);
        let omega = [0.3, -0.7];
        let pi = simplex_forward(&omega);
        let grad_pi: Vec<f64> = vec![
            2.0 * pi[0],
            2.0 * pi[2],
            2.0 * pi[1] + 3.0 * pi[2] * pi[2],
        ];
        let analytic = simplex_chain_rule(&grad_pi, &pi).unwrap();
        let fd = central_difference(|w| scalar(&simplex_forward(w)), &omega, 1e-6);
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    fn tiny_params() -> ModelParams {
        ModelParams::new(
            vec![
                LinearMap::new(array![[0.6, -0.1], [0.2, 0.9]], array![0.1, -0.2]).unwrap(),
                LinearMap::new(array![[1.1], [-0.4]], array![0.0, 0.3]).unwrap(),
            ],
            vec![0.25],
        )
        .unwrap()
    }

    #[test]
    fn prior_mode_and_gradients() {
        let d = 2;
        let maps = vec![LinearMap::zeros(d, 2), LinearMap::zeros(d, 1), LinearMap::zeros(d, 2)];
        let params = ModelParams::new(maps, vec![0.0, 0.0]).unwrap();
        let prior = PriorConfig::default();
        let lp = log_prior(&params, &prior).unwrap();
        // Analytic constant at the joint mode.
        let n_a = (2 + 1 + 2) * d;
        let n_b = 3 * d;
        let log_beta = 3.0 * ln_gamma(0.01) - ln_gamma(0.03);
        let expected = -(n_a as f64) * (2.0_f64).ln()
            - (n_b as f64) * 0.5 * (2.0 * std::f64::consts::PI * 1e3).ln()
            + 3.0 * 0.01 * (1.0_f64 / 3.0).ln()
            - log_beta;
        assert!((lp - expected).abs() < 1e-10, "{lp} vs {expected}");

        let (grad_phi, grad_omega) = log_prior_grad(&params, &prior).unwrap();
        assert!(grad_phi.iter().all(|&v| v == 0.0));
        // Uniform weights are the symmetric point of a symmetric prior.
        assert!(grad_omega.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn prior_omega_gradient_matches_finite_differences() {
        let params = tiny_params();
        let prior = PriorConfig {
            alpha: vec![0.01, 0.01],
            ..PriorConfig::default()
        };
        let (_, grad_omega) = log_prior_grad(&params, &prior).unwrap();
        let fd = central_difference(
            |omega| {
                let mut p = params.clone();
                p.set_omega(omega.to_vec()).unwrap();
                log_prior(&p, &prior).unwrap()
            },
            params.omega(),
            1e-6,
        );
        for (a, b) in grad_omega.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn prior_phi_gradient_matches_finite_differences() {
        let params = tiny_params();
        let prior = PriorConfig {
            alpha: vec![0.01, 0.01],
            ..PriorConfig::default()
        };
        let (grad_phi, _) = log_prior_grad(&params, &prior).unwrap();
        let fd = central_difference(
            |phi| {
                let mut p = params.clone();
                p.set_phi(phi).unwrap();
                log_prior(&p, &prior).unwrap()
            },
            &params.flatten_phi(),
            1e-7,
        );
        for (a, b) in grad_phi.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    fn tiny_observation() -> Observation {
        Observation::new(
            vec![
                dist(array![[0.5, -0.3], [1.0, 0.2], [-0.4, 0.8]]),
                dist(array![[0.7], [-0.2], [1.3]]),
            ],
            dist(array![[0.3, 0.1], [0.9, -0.5], [0.0, 0.6]]),
        )
        .unwrap()
    }

    #[test]
    fn fitted_single_predictor_is_the_pushforward() {
        let map = LinearMap::new(array![[0.8, 0.1], [-0.2, 1.0]], array![0.05, -0.1]).unwrap();
        let params = ModelParams::new(vec![map.clone()], vec![]).unwrap();
        let obs = Observation::new(
            vec![dist(array![[0.5, -0.3], [1.0, 0.2]])],
            dist(array![[0.0, 0.0]]),
        )
        .unwrap();
        let cfg = LikelihoodConfig::default();
        let fitted =
            fitted_distribution(&params, &obs, &cfg, TrackJacobians::phi(), 7).unwrap();
        let expected = pushforward(&map, &obs.predictors[0]).unwrap();
        assert_eq!(fitted.atoms.points(), expected.points());
        // Sensitivities are the push-forward Jacobians: ∂z_j/∂b = I.
        let jac = fitted.jac_phi.unwrap();
        assert_eq!(jac.dim(), (2, 2, 6));
        assert_eq!(jac[[0, 0, 4]], 1.0);
        assert_eq!(jac[[0, 1, 5]], 1.0);
        assert_eq!(jac[[0, 0, 0]], 0.5);
    }

    #[test]
    fn fitted_identical_pushforwards_recover_the_common_marginal() {
        // Two identical predictors under identical maps: the barycenter sits
        // on the common push-forward within solver tolerance.
        let f = dist(array![[0.5, -0.3], [1.0, 0.2], [-0.4, 0.8], [0.2, 0.2]]);
        let map = LinearMap::new(array![[1.0, 0.0], [0.0, 1.0]], array![0.3, -0.1]).unwrap();
        let params = ModelParams::new(vec![map.clone(), map.clone()], vec![0.0]).unwrap();
        let obs = Observation::new(vec![f.clone(), f.clone()], f.clone()).unwrap();
        let mut cfg = LikelihoodConfig::default();
        cfg.swb.iterations = 300;
        cfg.swb.projections = 32;
        let fitted =
            fitted_distribution(&params, &obs, &cfg, TrackJacobians::none(), 11).unwrap();
        let expected = pushforward(&map, &f).unwrap();
        let proj = sample_projections(256, 2, 99).unwrap();
        let sw = sw_distance_pp(&fitted.atoms, &expected, &proj, 2.0).unwrap();
        assert!(sw <= 1e-2, "sw = {sw}");
    }

    #[test]
    fn log_lik_zero_when_response_equals_fitted() {
        let map = LinearMap::identity(2);
        let params = ModelParams::new(vec![map], vec![]).unwrap();
        let f = dist(array![[0.5, -0.3], [1.0, 0.2]]);
        let obs = Observation::new(vec![f.clone()], f).unwrap();
        let cfg = LikelihoodConfig::default();
        let ll = gen_log_lik(&params, &obs, &cfg, 3, 5).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn log_lik_is_linear_in_w() {
        let params = tiny_params();
        let obs = tiny_observation();
        let mut cfg = LikelihoodConfig::default();
        cfg.swb.iterations = 5;
        cfg.swb.projections = 8;
        let full = gen_log_lik(&params, &obs, &cfg, 21, 22).unwrap();
        cfg.w /= 2.0;
        let half = gen_log_lik(&params, &obs, &cfg, 21, 22).unwrap();
        assert!((half - full / 2.0).abs() < 1e-14);
        assert!(full <= 0.0);
    }

    #[test]
    fn log_lik_invariant_to_atom_permutations() {
        let params = tiny_params();
        let obs = tiny_observation();
        let mut cfg = LikelihoodConfig::default();
        cfg.swb.iterations = 10;
        cfg.swb.projections = 8;
        let base = gen_log_lik(&params, &obs, &cfg, 31, 32).unwrap();

        // Permute atoms of predictor 0 and of the response.
        let permuted = Observation::new(
            vec![
                dist(array![[-0.4, 0.8], [0.5, -0.3], [1.0, 0.2]]),
                obs.predictors[1].clone(),
            ],
            dist(array![[0.0, 0.6], [0.3, 0.1], [0.9, -0.5]]),
        )
        .unwrap();
        let perm = gen_log_lik(&params, &permuted, &cfg, 31, 32).unwrap();
        assert_eq!(base.to_bits(), perm.to_bits());
    }

    #[test]
    fn relative_error_perfect_fit_is_zero_and_reference_is_one() {
        let f = dist(array![[0.5, -0.3], [1.0, 0.2], [-0.1, 0.4]]);
        let obs = Observation::new(vec![f.clone()], f.clone()).unwrap();
        let observations = vec![obs];
        let cfg = LikelihoodConfig::default();
        let reference = ReferenceIntercepts::pooled(&observations, 1).unwrap();
        let proj = sample_projections(64, 2, 47).unwrap();

        let perfect = ModelParams::new(vec![LinearMap::identity(2)], vec![]).unwrap();
        let re = relative_error(&perfect, &observations, &cfg, &reference, &proj, 1).unwrap();
        assert_eq!(re, 0.0);

        let mean = pooled_response_mean(&observations).unwrap();
        let intercept_only =
            ModelParams::new(vec![LinearMap::new(Array2::zeros((2, 2)), mean).unwrap()], vec![])
                .unwrap();
        let re1 =
            relative_error(&intercept_only, &observations, &cfg, &reference, &proj, 1).unwrap();
        assert!((re1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_rejects_degenerate_reference() {
        // Response equal to the pooled mean point mass makes the denominator 0.
        let f = dist(array![[1.0, 1.0]]);
        let obs = Observation::new(vec![f.clone()], f).unwrap();
        let observations = vec![obs];
        let cfg = LikelihoodConfig::default();
        let reference = ReferenceIntercepts::pooled(&observations, 1).unwrap();
        let proj = sample_projections(16, 2, 53).unwrap();
        let params = ModelParams::new(vec![LinearMap::identity(2)], vec![]).unwrap();
        assert!(relative_error(&params, &observations, &cfg, &reference, &proj, 1).is_err());
    }
}
