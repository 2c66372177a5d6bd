//! Self-describing JSON artifacts and their re-verification.
//!
//! Every artifact records the group, the run configuration, the tool version and
//! the full input, so [`verify_artifact`] can recompute its result from nothing else.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use crate::cubical::{cubical_convolution, MultconvResult};
use crate::error::{Budget, Error, Result};
use crate::forms::{MultilinearForm, PartitionRankResult};
use crate::group::{GroupSpec, Subspace, SubspaceJson};
use crate::inverse::{InverseConfig, Witness};
use crate::norms::{box_norm, directional_norm, mixed_norm, uniformity_norm, NormResult};
use crate::poly::Polynomial;
use crate::spectrum::{mls_enumerate, SpectrumEntry};
use crate::table::{self, CubicalFamily, FunctionTable};

pub const TOOL: &str = "gowers";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings shared by every subcommand, copied verbatim into each artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub tolerance: f64,
    /// Tuple-count cap for exhaustive stages.
    pub budget: Budget,
    pub strategy: Option<String>,
    pub output: Option<String>,
    pub rng: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            tolerance: 1e-9,
            budget: Budget::default(),
            strategy: None,
            output: None,
            rng: table::RNG_ALGORITHM.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub group: GroupSpec,
    pub config: RunConfig,
    pub input: Value,
    pub result: Value,
}

impl Artifact {
    pub fn new(
        kind: &str,
        group: &GroupSpec,
        config: &RunConfig,
        input: impl Serialize,
        result: impl Serialize,
    ) -> Result<Self> {
        Ok(Artifact {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            kind: kind.to_string(),
            group: group.clone(),
            config: config.clone(),
            input: serde_json::to_value(input)?,
            result: serde_json::to_value(result)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::input(format!("not an artifact: {e}")))
    }

    pub fn input_as<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.input.get(key).ok_or_else(|| Error::input(format!("artifact input lacks {key:?}")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::input(format!("artifact input {key:?}: {e}")))
    }

    pub fn result_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.result.clone()).map_err(|e| Error::input(format!("artifact result: {e}")))
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses `T` from a bare JSON value or from the `result` of an artifact.
pub fn load_value<T: DeserializeOwned>(text: &str) -> Result<T> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::input(format!("malformed JSON: {e}")))?;
    if v.get("tool").is_some() && v.get("result").is_some() {
        return serde_json::from_value(v["result"].clone()).map_err(|e| Error::input(e.to_string()));
    }
    serde_json::from_value(v).map_err(|e| Error::input(e.to_string()))
}

/// Recipe for a generated function table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "generator")]
pub enum Generator {
    Ones,
    Phase { poly: Polynomial },
    Structured { poly: Polynomial, seed: u64 },
    Unimodular { seed: u64 },
    Bounded { seed: u64 },
    Roots { seed: u64 },
}

impl Generator {
    pub fn build(&self, g: &GroupSpec) -> Result<FunctionTable> {
        Ok(match self {
            Generator::Ones => FunctionTable::ones(g),
            Generator::Phase { poly } => table::gen_polynomial_phase(g, poly)?,
            Generator::Structured { poly, seed } => table::gen_structured(g, poly, *seed)?,
            Generator::Unimodular { seed } => table::gen_random_unimodular(g, *seed),
            Generator::Bounded { seed } => table::gen_random_bounded(g, *seed),
            Generator::Roots { seed } => table::gen_random_root_phase(g, *seed),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Uk,
    Box,
    Directional,
    Mixed,
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uk" => Ok(NormKind::Uk),
            "box" => Ok(NormKind::Box),
            "directional" => Ok(NormKind::Directional),
            "mixed" => Ok(NormKind::Mixed),
            _ => Err(Error::input(format!("unknown norm kind {s:?}"))),
        }
    }
}

/// Input of a `norm` artifact; `param` is `k` for `uk` and `r` for `mixed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormInput {
    pub function: FunctionTable,
    pub kind: NormKind,
    pub param: Option<usize>,
    pub subspaces: Option<Vec<SubspaceJson>>,
}

pub fn compute_norm(input: &NormInput, budget: Budget) -> Result<NormResult> {
    let f = &input.function;
    let need = |what: &str| input.param.ok_or_else(|| Error::input(format!("norm kind needs --{what}")));
    match input.kind {
        NormKind::Uk => uniformity_norm(f, need("k")?, budget),
        NormKind::Box => box_norm(f),
        NormKind::Mixed => mixed_norm(f, need("r")?, budget),
        NormKind::Directional => {
            let subs = input.subspaces.as_ref().ok_or_else(|| Error::input("directional norm needs --subspaces"))?;
            let hs = subs.iter().map(|s| Subspace::from_json(f.group(), s)).collect::<Result<Vec<_>>>()?;
            directional_norm(f, &hs, budget)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiasReport {
    pub bias: f64,
    pub analytic_rank: Option<f64>,
}

pub fn bias_report(form: &MultilinearForm) -> Result<BiasReport> {
    let bias = form.bias()?;
    Ok(BiasReport { bias, analytic_rank: form.analytic_rank().ok() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubconvReport {
    pub convolution: FunctionTable,
    pub approximation: Option<MultconvResult>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Verification(msg()))
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Recomputes an artifact from its embedded input and compares within `config.tolerance`.
pub fn verify_artifact(a: &Artifact) -> Result<()> {
    check(a.tool == TOOL, || format!("artifact from tool {:?}", a.tool))?;
    let tol = a.config.tolerance;
    let budget = a.config.budget;
    match a.kind.as_str() {
        "function" => {
            let gen: Generator = a.input_as("generator")?;
            let stored: FunctionTable = a.result_as()?;
            check(stored.group() == &a.group, || "table group differs from the artifact group".into())?;
            let fresh = gen.build(&a.group)?;
            let d = fresh.max_abs_diff(&stored)?;
            check(d <= tol, || format!("regenerated table differs by {d:e}"))
        }
        "form" => {
            let seed: u64 = a.input_as("seed")?;
            let stored: MultilinearForm = a.result_as()?;
            let fresh = MultilinearForm::random(a.group.p(), a.group.dims().to_vec(), seed);
            check(fresh == stored, || "regenerated form differs".into())
        }
        "norm" => {
            let input: NormInput = serde_json::from_value(a.input.clone())?;
            let stored: NormResult = a.result_as()?;
            let fresh = compute_norm(&input, budget)?;
            check(close(fresh.value, stored.value, tol), || {
                format!("stored norm {} but recomputed {}", stored.value, fresh.value)
            })?;
            check(close(fresh.power_average, stored.power_average, tol), || "power average differs".into())
        }
        "bias" => {
            let form: MultilinearForm = a.input_as("form")?;
            let stored: BiasReport = a.result_as()?;
            let fresh = form.bias()?;
            check(close(fresh, stored.bias, tol), || format!("stored bias {} but recomputed {fresh}", stored.bias))
        }
        "prank" => {
            let form: MultilinearForm = a.input_as("form")?;
            let stored: PartitionRankResult = a.result_as()?;
            let up = stored.upper_witness.reconstruct(form.p(), form.blocks());
            check(up == form, || "upper-bound witness does not reconstruct the form".into())?;
            check(stored.upper_witness.m() == stored.upper, || "upper bound disagrees with its witness".into())?;
            check(stored.lower <= stored.upper, || "lower bound exceeds upper bound".into())?;
            if let Some(w) = &stored.witness {
                check(w.reconstruct(form.p(), form.blocks()) == form, || "witness does not reconstruct the form".into())?;
                check(Some(w.m()) == stored.rank, || "rank disagrees with its witness".into())?;
            }
            Ok(())
        }
        "spectrum" => {
            let f: FunctionTable = a.input_as("function")?;
            let eps: f64 = a.input_as("eps")?;
            let stored: Vec<SpectrumEntry> = a.result_as()?;
            let fresh = mls_enumerate(&f, eps, budget)?;
            check(fresh.len() == stored.len(), || {
                format!("stored {} spectrum members but recomputed {}", stored.len(), fresh.len())
            })?;
            for (s, t) in stored.iter().zip(&fresh) {
                check(s.form == t.form && close(s.box_value, t.box_value, tol), || {
                    format!("spectrum entry {:?} does not match", s.form.coeffs())
                })?;
            }
            Ok(())
        }
        "cubconv" => {
            let fam: CubicalFamily = a.input_as("family")?;
            let stored: CubconvReport = a.result_as()?;
            let boxf = cubical_convolution(&fam, budget)?;
            let d = boxf.max_abs_diff(&stored.convolution)?;
            check(d <= tol, || format!("stored convolution differs by {d:e}"))?;
            if let Some(m) = &stored.approximation {
                let e = m.fit.error_against(&boxf)?;
                check(close(e, m.fit.l2_error, tol), || format!("stored fit error {} but recomputed {e}", m.fit.l2_error))?;
                if m.success {
                    let eps: f64 = a.input_as("eps")?;
                    check(e <= eps + tol, || format!("fit marked successful with error {e} > {eps}"))?;
                }
            }
            Ok(())
        }
        "inverse" => {
            let f: FunctionTable = a.input_as("function")?;
            let r: usize = a.input_as("r")?;
            let w: Witness = a.result_as()?;
            check(w.r == r, || format!("witness for r = {} but input r = {r}", w.r))?;
            w.verify(&f)?;
            let c = crate::inverse::witness_correlation(&f, &w)?;
            check((c - w.correlation).norm() <= tol, || "stored correlation differs".into())
        }
        other => Err(Error::input(format!("unknown artifact kind {other:?}"))),
    }
}

/// Default pipeline settings used by the `inverse` subcommand.
pub fn inverse_config(budget: Budget) -> InverseConfig {
    InverseConfig { budget, ..InverseConfig::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig { seed: 7, budget: Budget(1 << 30), ..RunConfig::default() }
    }

    #[test]
    fn function_artifact_roundtrip_and_tamper() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let gen = Generator::Unimodular { seed: 7 };
        let f = gen.build(&g).unwrap();
        let a = Artifact::new("function", &g, &cfg(), serde_json::json!({ "generator": gen }), &f).unwrap();
        let back = Artifact::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        verify_artifact(&back).unwrap();
        let mut bad = back.clone();
        bad.result["values"][0][0] = serde_json::json!(0.5);
        assert_eq!(verify_artifact(&bad).unwrap_err().exit_code(), 4);
        let ft: FunctionTable = load_value(&a.to_json().unwrap()).unwrap();
        assert_eq!(ft, f);
    }

    #[test]
    fn norm_artifact_detects_altered_value() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let input = NormInput { function: FunctionTable::ones(&g), kind: NormKind::Box, param: None, subspaces: None };
        let res = compute_norm(&input, Budget(1 << 20)).unwrap();
        assert!((res.value - 1.0).abs() < 1e-12);
        let a = Artifact::new("norm", &g, &cfg(), &input, res).unwrap();
        verify_artifact(&a).unwrap();
        let mut bad = a.clone();
        bad.result["value"] = serde_json::json!(0.9);
        assert!(matches!(verify_artifact(&bad), Err(Error::Verification(_))));
    }

    #[test]
    fn unknown_kind_is_input_error() {
        let g = GroupSpec::new(2, vec![1]).unwrap();
        let a = Artifact::new("nope", &g, &cfg(), Value::Null, Value::Null).unwrap();
        assert_eq!(verify_artifact(&a).unwrap_err().exit_code(), 2);
    }
}
