//! The lamination law: a vertex of type `m ≥ 4` draws `m'` uniformly in
//! `{0, ..., m}` and has a child of type `1 + m'` if `m' ≥ 3`, then a child
//! of type `1 + m - m'` if `m' ≤ m - 3`.

use std::f64::consts::E;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::multitype::{
    expected_zn_exact, mean_matrix_on, spectral_data, spine_kernel, MeanMatrixMode, MultitypeLaw,
    SpineKernel, TypeCode, TypeSet, TypeWeights, DEFAULT_CHAIN_LEAK,
};
use crate::scaling::{survival_estimate, survival_trend, SurvivalLaw, SurvivalTrend};

pub const MIN_TYPE: TypeCode = 4;

/// Default truncation for spectral work.
pub const DEFAULT_K: usize = 60;

/// Appends the children of a type-`m` vertex for the split `m'`.
pub fn children_for_split(m: TypeCode, split: TypeCode, out: &mut Vec<TypeCode>) {
    if split >= 3 {
        out.push(1 + split);
    }
    if split + 3 <= m {
        out.push(1 + m - split);
    }
}

/// The `m + 1` equiprobable outcomes, by `m'` ascending.
pub fn lamination_offspring_enumerate(m: TypeCode) -> Result<Vec<(f64, Vec<TypeCode>)>> {
    if m < MIN_TYPE {
        return Err(Error::InvalidLaw(format!(
            "lamination type {m} < {MIN_TYPE}"
        )));
    }
    let p = 1.0 / (m + 1) as f64;
    Ok((0..=m)
        .map(|split| {
            let mut c = Vec::with_capacity(2);
            children_for_split(m, split, &mut c);
            (p, c)
        })
        .collect())
}

/// `m_{i,j} = 2/(i+1) · 1{j ≤ i+1}` for `i, j ≥ 4`.
pub fn mean_entry(i: TypeCode, j: TypeCode) -> f64 {
    if i < MIN_TYPE || j < MIN_TYPE || j > i + 1 {
        0.0
    } else {
        2.0 / (i + 1) as f64
    }
}

/// `p_{i,j} = 2(j-2) / ((i-2)(i+1)) · 1{4 ≤ j ≤ i+1}`.
pub fn kernel_entry(i: TypeCode, j: TypeCode) -> f64 {
    if i < MIN_TYPE || j < MIN_TYPE || j > i + 1 {
        0.0
    } else {
        2.0 * (j - 2) as f64 / (((i - 2) * (i + 1)) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosedForms {
    pub a: f64,
    pub b: f64,
    pub pi: f64,
    pub eta2: f64,
}

pub fn eta2() -> f64 {
    16.0 / (5.0 * (E * E - 1.0).powi(2))
}

pub fn b(i: TypeCode) -> f64 {
    2.0 * (i as f64 - 2.0) / (E * E - 1.0)
}

/// `2^{i-3}(i-3)/(i-1)!`, underflowing gracefully to zero.
pub fn a(i: TypeCode) -> f64 {
    // c_i = 2^{i-3}/(i-1)!, c_4 = 1/3, c_{i+1} = 2 c_i / i
    let mut c = 1.0 / 3.0;
    for k in 4..i {
        c *= 2.0 / k as f64;
        if c == 0.0 {
            break;
        }
    }
    c * (i - 3) as f64
}

pub fn closed_forms(i: TypeCode) -> Result<ClosedForms> {
    if i < MIN_TYPE {
        return Err(Error::InvalidArgument(format!(
            "lamination type {i} < {MIN_TYPE}"
        )));
    }
    let (a, b) = (a(i), b(i));
    Ok(ClosedForms {
        a,
        b,
        pi: a * b,
        eta2: eta2(),
    })
}

/// Exact spine kernel on types `4..=max_type`, built from the closed-form
/// `a` and `b`; rows below `max_type` do not leak. Returns the kernel and `b`.
pub fn closed_form_kernel(max_type: TypeCode) -> Result<(SpineKernel, Vec<f64>)> {
    if max_type < MIN_TYPE + 1 {
        return Err(Error::InvalidArgument(format!(
            "max type {max_type} too small"
        )));
    }
    let types = TypeSet::new((MIN_TYPE..=max_type).collect());
    let m = mean_matrix_on(&MultitypeLaw::Lamination, types, MeanMatrixMode::Exact, 0)?;
    let av: Vec<f64> = (MIN_TYPE..=max_type).map(a).collect();
    let bv: Vec<f64> = (MIN_TYPE..=max_type).map(b).collect();
    let kernel = spine_kernel(&m, &av, &bv)?;
    Ok((kernel, bv))
}

/// `b` on the whole type space, for many-to-one checks.
pub fn b_weights() -> TypeWeights {
    TypeWeights::Function(std::sync::Arc::new(|t| (t >= MIN_TYPE).then(|| b(t))))
}

/// `lim E_4[Z_n] = b_4 = 4/(e²-1)`.
pub fn zn_limit() -> f64 {
    b(4)
}

/// `2 b_4 / η² = 5(e²-1)/2`, the survival constant from the general theorem.
pub fn survival_constant_theorem() -> f64 {
    2.0 * b(4) / eta2()
}

/// `2/η² = 5(e²-1)²/8`, the constant stated in the application.
pub fn survival_constant_text() -> f64 {
    2.0 / eta2()
}

#[derive(Clone, Debug, Serialize)]
pub struct ZnRow {
    pub n: usize,
    pub value: f64,
    pub leak: f64,
    pub limit: f64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralCheck {
    #[serde(rename = "K")]
    pub k: usize,
    pub eigenvalue: f64,
    pub max_abs_diff_a: f64,
    pub max_abs_diff_b: f64,
    /// Types compared against the closed forms.
    pub compared_up_to: TypeCode,
    pub eta2: f64,
    pub eta2_closed: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Section5Report {
    pub zn: Vec<ZnRow>,
    #[serde(rename = "K_chain")]
    pub k_chain: usize,
    pub spectral: SpectralCheck,
    pub survival: Option<SurvivalTrend>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Section5Config {
    pub n_list: Vec<usize>,
    /// Replicates per survival estimate; `0` skips the Monte Carlo part.
    #[serde(rename = "R")]
    pub r: usize,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    /// Tolerance for `|E_4[Z_n] - b_4|`.
    pub zn_tol: f64,
}

/// Exact `E_4[Z_n]`, the spectral cross-check and the survival constants.
pub fn reproduce_section5(cfg: &Section5Config) -> Result<Section5Report> {
    if cfg.n_list.is_empty() {
        return Err(Error::InvalidArgument("empty n list".into()));
    }
    let law = MultitypeLaw::Lamination;
    let spec = spectral_data(&law, MIN_TYPE, cfg.k, MeanMatrixMode::Exact, cfg.seed)?;
    let upto = (MIN_TYPE + 16).min(MIN_TYPE + spec.types.len() as u64 - 1);
    let mut da: f64 = 0.0;
    let mut db: f64 = 0.0;
    for i in MIN_TYPE..=upto {
        let cf = closed_forms(i)?;
        da = da.max((spec.a_of(i).unwrap() - cf.a).abs());
        db = db.max((spec.b_of(i).unwrap() - cf.b).abs());
    }
    let spectral = SpectralCheck {
        k: spec.k,
        eigenvalue: spec.eigenvalue,
        max_abs_diff_a: da,
        max_abs_diff_b: db,
        compared_up_to: upto,
        eta2: spec.eta2,
        eta2_closed: eta2(),
        warnings: spec.warnings.clone(),
    };

    let n_max = *cfg.n_list.iter().max().unwrap();
    let k_chain = cfg.k.max(n_max + 10);
    let chain = if k_chain == spec.k {
        spec
    } else {
        spectral_data(&law, MIN_TYPE, k_chain, MeanMatrixMode::Exact, cfg.seed)?
    };
    let mut zn = Vec::new();
    for &n in &cfg.n_list {
        let z = expected_zn_exact(&chain.kernel, &chain.b, MIN_TYPE, n, DEFAULT_CHAIN_LEAK)?;
        zn.push(ZnRow {
            n,
            value: z.value,
            leak: z.leak,
            limit: zn_limit(),
            abs_diff: (z.value - zn_limit()).abs(),
        });
    }

    let survival = if cfg.r > 0 {
        let mut estimates = Vec::new();
        for &n in &cfg.n_list {
            estimates.push(survival_estimate(
                SurvivalLaw::Multitype(&law, MIN_TYPE),
                n,
                cfg.r,
                cfg.seed,
            )?);
        }
        Some(survival_trend(
            estimates,
            &[
                ("theorem", survival_constant_theorem()),
                ("application", survival_constant_text()),
            ],
        ))
    } else {
        None
    };

    let pass = zn.iter().all(|r| r.abs_diff < cfg.zn_tol)
        && (spectral.eigenvalue - 1.0).abs() < 1e-6
        && spectral.max_abs_diff_a < 1e-8
        && spectral.max_abs_diff_b < 1e-8
        && survival.as_ref().is_none_or(|s| s.pass);
    Ok(Section5Report {
        zn,
        k_chain,
        spectral,
        survival,
        pass,
    })
}
