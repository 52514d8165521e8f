//! Model files (`*.toy`): TOML with an explicit schema version.
//!
//! ```toml
//! version = 1
//! kind = "doubling"        # or "markov", "gaussian"
//! name = "doubling_cos"
//! d = 1
//! seed = 7
//! K = 64                   # doubling only
//! cos = [{ k = 1, coef = [1.0] }]
//! sin = []
//! g_cos = []               # optional transfer function g with f = g - g o T
//! ```
//!
//! Markov chains give `transition` (rows), `values` (one row of `d` reals per
//! state) and optionally `initial`; gaussian models give `covariance`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DoublingMap, FiniteMarkovChain, FourierObservable, IidGaussian, ProcessModel, StateObservable};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrigTerm {
    pub k: i64,
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    pub d: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, rename = "K")]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub cos: Vec<TrigTerm>,
    #[serde(default)]
    pub sin: Vec<TrigTerm>,
    #[serde(default)]
    pub g_cos: Vec<TrigTerm>,
    #[serde(default)]
    pub g_sin: Vec<TrigTerm>,
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub values: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidModel(format!("{what} must be a non-empty square table")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn trig_pairs(terms: &[TrigTerm]) -> Vec<(i64, Vec<f64>)> {
    terms.iter().map(|t| (t.k, t.coef.clone())).collect()
}

impl ModelFile {
    pub fn build(&self) -> Result<ProcessModel> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!("unsupported model file version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        let model = match self.kind.as_str() {
            "doubling" => {
                let f = FourierObservable::trig(self.d, &trig_pairs(&self.cos), &trig_pairs(&self.sin))?;
                let k = self.truncation.ok_or_else(|| Error::InvalidModel("doubling models need the truncation K".into()))?;
                let mut map = DoublingMap::new(f, k)?;
                if !self.g_cos.is_empty() || !self.g_sin.is_empty() {
                    let g = FourierObservable::trig(self.d, &trig_pairs(&self.g_cos), &trig_pairs(&self.g_sin))?;
                    map = map.with_transfer(g)?;
                }
                ProcessModel::Doubling(map)
            }
            "markov" => {
                let p = square(
                    self.transition.as_deref().ok_or_else(|| Error::InvalidModel("markov models need `transition`".into()))?,
                    "transition",
                )?;
                let values = self.values.clone().ok_or_else(|| Error::InvalidModel("markov models need `values`".into()))?;
                let f = StateObservable::new(values)?;
                if f.dim() != self.d {
                    return Err(Error::InvalidModel(format!("values have {} components, d = {}", f.dim(), self.d)));
                }
                ProcessModel::Markov(FiniteMarkovChain::new(p, f, self.initial.clone())?)
            }
            "gaussian" => {
                let cov = match &self.covariance {
                    Some(rows) => square(rows, "covariance")?,
                    None => DMatrix::identity(self.d, self.d),
                };
                if cov.nrows() != self.d {
                    return Err(Error::InvalidModel(format!("covariance is {0}x{0}, d = {1}", cov.nrows(), self.d)));
                }
                ProcessModel::Gaussian(IidGaussian::new(cov)?)
            }
            other => return Err(Error::InvalidModel(format!("unknown model kind `{other}`"))),
        };
        Ok(model)
    }
}

pub fn parse_model(text: &str) -> Result<(ModelFile, ProcessModel)> {
    let file: ModelFile = toml::from_str(text)?;
    let model = file.build()?;
    Ok((file, model))
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<(ModelFile, ProcessModel)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_kind() {
        let (_, m) = parse_model("version = 1\nkind = \"doubling\"\nd = 1\nK = 8\ncos = [{ k = 1, coef = [1.0] }]\n").unwrap();
        assert_eq!(m.kind_name(), "doubling");
        let (_, m) =
            parse_model("version = 1\nkind = \"markov\"\nd = 1\ntransition = [[0.7, 0.3], [0.2, 0.8]]\nvalues = [[0.6], [-0.4]]\n")
                .unwrap();
        assert_eq!(m.kind_name(), "markov");
        let (_, m) = parse_model("version = 1\nkind = \"gaussian\"\nd = 2\ncovariance = [[2.0, 0.0], [0.0, 3.0]]\n").unwrap();
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_model("version = 2\nkind = \"gaussian\"\nd = 1\n").is_err());
        assert!(parse_model("version = 1\nkind = \"torus\"\nd = 1\n").is_err());
        assert!(parse_model("version = 1\nkind = \"gaussian\"\nd = 1\nbogus = 3\n").is_err());
        assert!(parse_model("version = 1\nkind = \"doubling\"\nd = 1\ncos = [{ k = 4, coef = [1.0] }]\nK = 2\n").is_err());
    }
}
