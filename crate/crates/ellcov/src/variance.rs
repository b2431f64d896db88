//! Asymptotic variance formulas for the difference statistic T.
//!
//! Houses the elliptical-model variance σ_n², its null simplification
//! σ_{n,0}², the plug-in null-scale estimator σ̂_{n,0}, and the
//! independent-component-model variance γ_n² kept for comparison. Also
//! provides the finite-dimension radial variance parameter τ for each
//! radial law and a diagnostic for the trace-ratio decay condition that
//! the asymptotics rely on.
//!
//! All traces are evaluated through Frobenius pairings of explicitly formed
//! pairwise products; no matrix power beyond a single product is built.

use ndarray::Array2;
use thiserror::Error;

use crate::linalg::{frob_inner, sym_sqrt_psd, symmetry_defect, trace, trace_product};
use crate::sim::RadialLaw;

#[derive(Debug, Error)]
pub enum VarianceError {
    #[error("covariance matrices have mismatched dimensions {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),
    #[error("covariance matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("covariance matrix is not symmetric (relative defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("sample sizes must be at least 1, got n1 = {n1}, n2 = {n2}")]
    InvalidSampleSizes { n1: usize, n2: usize },
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {lambda_min:.3e})")]
    NotPositiveSemidefinite { lambda_min: f64 },
    #[error("radial variance parameters must be nonnegative, got tau = ({tau1}, {tau2})")]
    InvalidTau { tau1: f64, tau2: f64 },
    #[error("fourth-moment parameters must be at least 1, got nu3 = ({nu3_1}, {nu3_2})")]
    InvalidNu3 { nu3_1: f64, nu3_2: f64 },
    #[error("zero trace denominator in the ratio diagnostic")]
    ZeroTraceDenominator,
}

/// A pair of population covariance matrices together with the two sample
/// sizes. Construction checks symmetry (relative defect ≤ 1e-10) and that
/// the dimensions match.
#[derive(Debug, Clone)]
pub struct PopulationPair {
    sigma1: Array2<f64>,
    sigma2: Array2<f64>,
    n1: usize,
    n2: usize,
}

impl PopulationPair {
    pub fn new(
        sigma1: Array2<f64>,
        sigma2: Array2<f64>,
        n1: usize,
        n2: usize,
    ) -> Result<Self, VarianceError> {
        for m in [&sigma1, &sigma2] {
            let (rows, cols) = m.dim();
            if rows != cols {
                return Err(VarianceError::NotSquare { rows, cols });
            }
            let defect = symmetry_defect(m);
            if defect > 1e-10 {
                return Err(VarianceError::NotSymmetric { defect });
            }
        }
        if sigma1.nrows() != sigma2.nrows() {
            return Err(VarianceError::DimensionMismatch(
                sigma1.nrows(),
                sigma2.nrows(),
            ));
        }
        if n1 == 0 || n2 == 0 {
            return Err(VarianceError::InvalidSampleSizes { n1, n2 });
        }
        Ok(Self {
            sigma1,
            sigma2,
            n1,
            n2,
        })
    }

    pub fn sigma1(&self) -> &Array2<f64> {
        &self.sigma1
    }

    pub fn sigma2(&self) -> &Array2<f64> {
        &self.sigma2
    }

    pub fn dimension(&self) -> usize {
        self.sigma1.nrows()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }
}

/// Radial moment inputs: τ_i is the finite-dimension value of
/// Var(ξ_i²)/p, and ν_{i,3} the fourth moment of the independent
/// component (only used by the comparison variance γ_n²).
#[derive(Debug, Clone, Copy)]
pub struct RadialMoments {
    pub tau1: f64,
    pub tau2: f64,
    pub nu3_1: f64,
    pub nu3_2: f64,
}

impl RadialMoments {
    pub fn new(tau1: f64, tau2: f64, nu3_1: f64, nu3_2: f64) -> Result<Self, VarianceError> {
        if !(tau1 >= 0.0 && tau2 >= 0.0) {
            return Err(VarianceError::InvalidTau { tau1, tau2 });
        }
        if !(nu3_1 >= 1.0 && nu3_2 >= 1.0) {
            return Err(VarianceError::InvalidNu3 { nu3_1, nu3_2 });
        }
        Ok(Self {
            tau1,
            tau2,
            nu3_1,
            nu3_2,
        })
    }

    /// Moments of the normal case: τ = 2, ν₃ = 3.
    pub fn normal() -> Self {
        Self {
            tau1: 2.0,
            tau2: 2.0,
            nu3_1: 3.0,
            nu3_2: 3.0,
        }
    }

    /// Finite-dimension τ values for a pair of radial laws, with ν₃ left at
    /// the normal value 3.
    pub fn from_radial_laws(law1: RadialLaw, law2: RadialLaw, p: usize) -> Self {
        Self {
            tau1: radial_tau(law1, p),
            tau2: radial_tau(law2, p),
            nu3_1: 3.0,
            nu3_2: 3.0,
        }
    }
}

/// Per-sample summands of the variance expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    /// 4/n_i² · tr²(Σ_i²)
    pub trace_sq: f64,
    /// 8/n_i · tr{Σ_i(Σ₁−Σ₂)}²
    pub interaction: f64,
    /// 4(τ_i−2)/(p·n_i) · tr²(Σ_i(Σ₁−Σ₂))
    pub radial: f64,
}

impl SampleTerms {
    pub fn total(&self) -> f64 {
        self.trace_sq + self.interaction + self.radial
    }
}

/// Named breakdown of every summand of the σ_n² expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub sample1: SampleTerms,
    pub sample2: SampleTerms,
    /// 8/(n₁n₂) · tr²(Σ₁Σ₂)
    pub cross: f64,
}

impl VarianceComponents {
    pub fn total(&self) -> f64 {
        self.sample1.total() + self.sample2.total() + self.cross
    }
}

/// Every variance quantity of one population pair in one report.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub sigma_sq: f64,
    pub sigma0_sq: f64,
    pub gamma_sq: f64,
    pub components: VarianceComponents,
}

struct TraceSet {
    tr_s1_sq: f64,
    tr_s2_sq: f64,
    tr_cross: f64,
    /// tr{Σ_i(Σ₁−Σ₂)}² per sample
    tr_inter: [f64; 2],
    /// tr(Σ_i(Σ₁−Σ₂)) per sample
    tr_diff: [f64; 2],
}

fn trace_set(pop: &PopulationPair) -> TraceSet {
    let d = &pop.sigma1 - &pop.sigma2;
    let m1 = pop.sigma1.dot(&d);
    let m2 = pop.sigma2.dot(&d);
    TraceSet {
        tr_s1_sq: frob_inner(&pop.sigma1, &pop.sigma1),
        tr_s2_sq: frob_inner(&pop.sigma2, &pop.sigma2),
        tr_cross: frob_inner(&pop.sigma1, &pop.sigma2),
        tr_inter: [trace_product(&m1, &m1), trace_product(&m2, &m2)],
        tr_diff: [trace(&m1), trace(&m2)],
    }
}

/// The leading-order variance of T under the elliptical model, together
/// with its per-summand breakdown.
pub fn sigma_n_squared_components(pop: &PopulationPair, mom: &RadialMoments) -> VarianceComponents {
    let p = pop.dimension() as f64;
    let traces = trace_set(pop);
    let per_sample = |n: usize, tau: f64, tr_sq: f64, inter: f64, diff: f64| {
        let n = n as f64;
        SampleTerms {
            trace_sq: 4.0 / (n * n) * tr_sq * tr_sq,
            interaction: 8.0 / n * inter,
            radial: 4.0 * (tau - 2.0) / (p * n) * diff * diff,
        }
    };
    VarianceComponents {
        sample1: per_sample(
            pop.n1,
            mom.tau1,
            traces.tr_s1_sq,
            traces.tr_inter[0],
            traces.tr_diff[0],
        ),
        sample2: per_sample(
            pop.n2,
            mom.tau2,
            traces.tr_s2_sq,
            traces.tr_inter[1],
            traces.tr_diff[1],
        ),
        cross: 8.0 / (pop.n1 as f64 * pop.n2 as f64) * traces.tr_cross * traces.tr_cross,
    }
}

/// σ_n², the leading-order variance of T under the elliptical model.
pub fn sigma_n_squared(pop: &PopulationPair, mom: &RadialMoments) -> f64 {
    sigma_n_squared_components(pop, mom).total()
}

/// σ_{n,0}² = 4(1/n₁ + 1/n₂)²·tr²(Σ₀²), the null simplification. The first
/// covariance of the pair is used as Σ₀; under the null the two coincide.
pub fn sigma_null_squared(pop: &PopulationPair) -> f64 {
    let tr = frob_inner(&pop.sigma1, &pop.sigma1);
    let rate = 1.0 / pop.n1 as f64 + 1.0 / pop.n2 as f64;
    4.0 * rate * rate * tr * tr
}

/// Plug-in estimator σ̂_{n,0} = 2U₁/n₁ + 2U₂/n₂ of the null standard
/// deviation scale σ_{n,0}. No square root is applied: the quantity already
/// estimates the scale, not its square. Nonpositive values are passed
/// through; the test procedure rejects them as degenerate.
pub fn sigma_hat_null(u1: f64, u2: f64, n1: usize, n2: usize) -> f64 {
    2.0 * u1 / n1 as f64 + 2.0 * u2 / n2 as f64
}

/// γ_n², the asymptotic variance that holds under an independent-component
/// model in place of the elliptical one. It differs from σ_n² by replacing
/// the radial term with a fourth-moment Hadamard term; the two coincide at
/// (τ, ν₃) = (2, 3).
///
/// The Hadamard term needs the symmetric matrix square roots of Σ₁ and Σ₂,
/// computed by eigendecomposition with eigenvalues clamped at zero; a
/// matrix whose smallest eigenvalue is below −1e-8·max|λ| is rejected.
pub fn gamma_n_squared(pop: &PopulationPair, mom: &RadialMoments) -> Result<f64, VarianceError> {
    let traces = trace_set(pop);
    let d = &pop.sigma1 - &pop.sigma2;

    let hadamard = |sigma: &Array2<f64>| -> Result<f64, VarianceError> {
        let root = sym_sqrt_psd(sigma, 1e-8)
            .map_err(|lambda_min| VarianceError::NotPositiveSemidefinite { lambda_min })?;
        let m = root.dot(&d).dot(&root);
        // tr(M ∘ M) only touches the diagonal of M.
        Ok(m.diag().iter().map(|v| v * v).sum())
    };

    let per_sample = |n: usize, nu3: f64, tr_sq: f64, inter: f64, had: f64| {
        let n = n as f64;
        4.0 / (n * n) * tr_sq * tr_sq + 8.0 / n * inter + 4.0 * (nu3 - 3.0) / n * had
    };

    let h1 = hadamard(&pop.sigma1)?;
    let h2 = hadamard(&pop.sigma2)?;
    Ok(per_sample(pop.n1, mom.nu3_1, traces.tr_s1_sq, traces.tr_inter[0], h1)
        + per_sample(pop.n2, mom.nu3_2, traces.tr_s2_sq, traces.tr_inter[1], h2)
        + 8.0 / (pop.n1 as f64 * pop.n2 as f64) * traces.tr_cross * traces.tr_cross)
}

/// Full variance report for one population pair.
pub fn variance_report(pop: &PopulationPair, mom: &RadialMoments) -> Result<VarianceReport, VarianceError> {
    let components = sigma_n_squared_components(pop, mom);
    Ok(VarianceReport {
        sigma_sq: components.total(),
        sigma0_sq: sigma_null_squared(pop),
        gamma_sq: gamma_n_squared(pop, mom)?,
        components,
    })
}

/// Finite-dimension value of τ = Var(ξ²)/p for each radial law.
///
/// Derivations from closed-form moments, with ξ² distributed as:
/// - χ²_p: Var = 2p, so τ = 2.
/// - Beta-Prime(a, b) with a = p(p+4)/3, b = (p+7)/3:
///   Var = a(a+b−1)/((b−2)(b−1)²) = 3p, so τ = 3 for every p.
/// - (p+4)·Beta(p/2, 2): Var = (p+4)²·(p/2·2)/((p/2+2)²(p/2+3)) = 8p/(p+6),
///   so τ = 8/(p+6), vanishing as p grows.
/// - Gamma(p/5, rate 1/5): Var = (p/5)·25 = 5p, so τ = 5.
/// - Gamma(p,1)²/(p+1): Var(G²) = p(p+1)(4p+6) from the rising-factorial
///   moments of G, so τ = (4p+6)/(p+1), tending to 4.
/// - the degenerate diagnostic law ξ² ≡ p: τ = 0.
pub fn radial_tau(law: RadialLaw, p: usize) -> f64 {
    let pf = p as f64;
    match law {
        RadialLaw::ChiSq => 2.0,
        RadialLaw::BetaPrime => 3.0,
        RadialLaw::ScaledBeta => 8.0 / (pf + 6.0),
        RadialLaw::GammaLaw => 5.0,
        RadialLaw::ScaledGammaSq => (4.0 * pf + 6.0) / (pf + 1.0),
        RadialLaw::Degenerate => 0.0,
    }
}

/// Exact fourth radial moment E[ξ⁴] = p² + p·τ(p) of a law; feeds the
/// bilinear-form moment identities.
pub fn radial_fourth_moment(law: RadialLaw, p: usize) -> f64 {
    let pf = p as f64;
    pf * pf + pf * radial_tau(law, p)
}

/// Diagnostic for the trace-ratio decay condition behind the asymptotics:
/// the maximum over (i,j,k,l) ∈ {1,2}⁴ of
/// tr(Σ_iΣ_jΣ_kΣ_l) / (tr(Σ_iΣ_j)·tr(Σ_kΣ_l)).
/// Small values indicate the condition plausibly holds; no pass/fail
/// threshold is applied here.
pub fn assumption_a3_ratio(pop: &PopulationPair) -> Result<f64, VarianceError> {
    let sigmas = [&pop.sigma1, &pop.sigma2];
    let mut products: Vec<Vec<Array2<f64>>> = Vec::with_capacity(2);
    for a in &sigmas {
        let mut row = Vec::with_capacity(2);
        for b in &sigmas {
            row.push(a.dot(*b));
        }
        products.push(row);
    }
    let traces: Vec<Vec<f64>> = products
        .iter()
        .map(|row| row.iter().map(trace).collect())
        .collect();

    let mut worst = f64::NEG_INFINITY;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let denom = traces[i][j] * traces[k][l];
                    if denom == 0.0 {
                        return Err(VarianceError::ZeroTraceDenominator);
                    }
                    // tr(Σ_iΣ_j · Σ_kΣ_l) via the pairwise products only.
                    let numer = trace_product(&products[i][j], &products[k][l]);
                    worst = worst.max(numer / denom);
                }
            }
        }
    }
    Ok(worst)
}
