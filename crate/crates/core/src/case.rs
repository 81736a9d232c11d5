//! Selection cases and their JSON manifests.
//!
//! A manifest is a flat JSON object whose values are tensor paths relative to
//! the manifest's directory:
//!
//! ```json
//! {"tokens": "tokens.idsl", "cls_attention": "cls_attention.idsl", "label": "img-0"}
//! ```
//!
//! Recognised keys are `tokens` (required), `cls_attention`, `cross_query`,
//! `cross_keys`, `text_feature`, `vision_embeddings` and `label`. Any other key,
//! or any non-string value, is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Tensor};

/// Manifest keys that name tensors, in canonical order.
pub const TENSOR_FIELDS: [&str; 6] = [
    "tokens",
    "cls_attention",
    "cross_query",
    "cross_keys",
    "text_feature",
    "vision_embeddings",
];

/// One selection problem: the tokens to select from plus any importance inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    /// Projected visual tokens, `N x D`. Distances during selection are taken here.
    pub tokens: Tensor,
    /// `[CLS]` attention row over the `N` tokens.
    pub cls_attention: Option<Tensor>,
    /// Last-instruction-token query: `(d)` or `(H x d_h)`.
    pub cross_query: Option<Tensor>,
    /// Visual-token keys: `(N x d)` or `(H x N x d_h)`.
    pub cross_keys: Option<Tensor>,
    /// Instruction feature from the paired text encoder, `(d)`.
    pub text_feature: Option<Tensor>,
    /// Vision-encoder embeddings compared against `text_feature`, `N x d`.
    pub vision_embeddings: Option<Tensor>,
    pub label: Option<String>,
}

impl Case {
    pub fn new(tokens: Tensor) -> Self {
        Self {
            tokens,
            cls_attention: None,
            cross_query: None,
            cross_keys: None,
            text_feature: None,
            vision_embeddings: None,
            label: None,
        }
    }

    pub fn with_cls_attention(mut self, attention: Tensor) -> Self {
        self.cls_attention = Some(attention);
        self
    }

    pub fn with_cross(mut self, query: Tensor, keys: Tensor) -> Self {
        self.cross_query = Some(query);
        self.cross_keys = Some(keys);
        self
    }

    pub fn with_instruction(mut self, vision_embeddings: Tensor, text_feature: Tensor) -> Self {
        self.vision_embeddings = Some(vision_embeddings);
        self.text_feature = Some(text_feature);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Number of tokens `N`.
    pub fn n_tokens(&self) -> usize {
        self.tokens.shape().first().copied().unwrap_or(0)
    }

    /// Token width `D`.
    pub fn dim(&self) -> usize {
        self.tokens.shape().get(1).copied().unwrap_or(0)
    }

    /// Checks every cross-tensor invariant.
    pub fn validate(&self) -> Result<()> {
        let tokens = self.tokens.shape();
        if tokens.len() != 2 {
            return Err(Error::Shape(format!(
                "tokens must be rank 2 (N x D), got shape {tokens:?}"
            )));
        }
        let n = tokens[0];
        if n == 0 || tokens[1] == 0 {
            return Err(Error::Shape(format!(
                "tokens must have N >= 1 and D >= 1, got shape {tokens:?}"
            )));
        }

        if let Some(cls) = &self.cls_attention {
            if cls.shape() != [n] {
                return Err(mismatch("cls_attention", cls, "tokens", &self.tokens));
            }
            if let Some(i) = cls.data().iter().position(|&v| v < 0.0) {
                return Err(Error::Validation(format!(
                    "cls_attention[{i}] = {} is negative",
                    cls.data()[i]
                )));
            }
        }

        match (&self.cross_query, &self.cross_keys) {
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::Validation(
                    "cross_query is present but cross_keys is absent".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Validation(
                    "cross_keys is present but cross_query is absent".into(),
                ))
            }
            (Some(q), Some(k)) => {
                let ok = match (q.shape(), k.shape()) {
                    (&[d], &[kn, kd]) => kn == n && kd == d && d > 0,
                    (&[h, d], &[kh, kn, kd]) => h > 0 && kh == h && kn == n && kd == d && d > 0,
                    _ => false,
                };
                if !ok {
                    return Err(Error::Shape(format!(
                        "cross_query has shape {:?}, inconsistent with cross_keys shape {:?} \
                         (expected (d) with (N x d), or (H x d_h) with (H x N x d_h), N = {n})",
                        q.shape(),
                        k.shape()
                    )));
                }
            }
        }

        if let Some(v) = &self.vision_embeddings {
            if v.rank() != 2 || v.shape()[0] != n || v.shape()[1] == 0 {
                return Err(mismatch("vision_embeddings", v, "tokens", &self.tokens));
            }
        }
        if let Some(t) = &self.text_feature {
            match &self.vision_embeddings {
                None => {
                    return Err(Error::Validation(
                        "text_feature is present but vision_embeddings is absent".into(),
                    ))
                }
                Some(v) => {
                    if t.rank() != 1 || t.shape()[0] != v.shape()[1] {
                        return Err(mismatch("text_feature", t, "vision_embeddings", v));
                    }
                }
            }
        }
        Ok(())
    }
}

fn mismatch(a: &str, ta: &Tensor, b: &str, tb: &Tensor) -> Error {
    Error::Shape(format!(
        "{a} has shape {:?}, inconsistent with {b} shape {:?}",
        ta.shape(),
        tb.shape()
    ))
}

/// On-disk manifest: tensor file names plus an optional label.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CaseManifest {
    pub tokens: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cls_attention: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_keys: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text_feature: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vision_embeddings: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl CaseManifest {
    /// Parses a manifest object, rejecting unknown keys and non-string values.
    pub fn from_json(value: &Value, origin: &Path) -> Result<Self> {
        let err = |message: String| Error::Manifest {
            path: origin.to_path_buf(),
            message,
        };
        let obj: &Map<String, Value> = value
            .as_object()
            .ok_or_else(|| err("manifest must be a JSON object".into()))?;

        let mut manifest = CaseManifest::default();
        let mut have_tokens = false;
        for (key, v) in obj {
            let s = v
                .as_str()
                .ok_or_else(|| err(format!("field `{key}` must be a string, got {v}")))?
                .to_owned();
            let slot = match key.as_str() {
                "tokens" => {
                    have_tokens = true;
                    manifest.tokens = s;
                    continue;
                }
                "cls_attention" => &mut manifest.cls_attention,
                "cross_query" => &mut manifest.cross_query,
                "cross_keys" => &mut manifest.cross_keys,
                "text_feature" => &mut manifest.text_feature,
                "vision_embeddings" => &mut manifest.vision_embeddings,
                "label" => &mut manifest.label,
                other => return Err(err(format!("unknown field `{other}`"))),
            };
            *slot = Some(s);
        }
        if !have_tokens {
            return Err(err("missing required field `tokens`".into()));
        }
        Ok(manifest)
    }
}

/// Loads a case from a manifest, resolving tensor paths against its directory.
pub fn load_case(manifest_path: impl AsRef<Path>) -> Result<Case> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: format!("invalid JSON: {e}"),
    })?;
    let manifest = CaseManifest::from_json(&value, manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let load = |rel: &Option<String>| -> Result<Option<Tensor>> {
        rel.as_deref()
            .map(|r| read_tensor(base.join(r)))
            .transpose()
    };
    let case = Case {
        tokens: read_tensor(base.join(&manifest.tokens))?,
        cls_attention: load(&manifest.cls_attention)?,
        cross_query: load(&manifest.cross_query)?,
        cross_keys: load(&manifest.cross_keys)?,
        text_feature: load(&manifest.text_feature)?,
        vision_embeddings: load(&manifest.vision_embeddings)?,
        label: manifest.label,
    };
    case.validate().map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(case)
}

/// Writes every present tensor as `<field>.idsl` into `dir` plus `case.json`,
/// returning the manifest path.
pub fn write_case(case: &Case, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let save = |name: &str, t: &Option<Tensor>| -> Result<Option<String>> {
        t.as_ref()
            .map(|t| {
                let file = format!("{name}.idsl");
                write_tensor(t, dir.join(&file)).map(|_| file)
            })
            .transpose()
    };
    let manifest = CaseManifest {
        tokens: save("tokens", &Some(case.tokens.clone()))?.expect("tokens present"),
        cls_attention: save("cls_attention", &case.cls_attention)?,
        cross_query: save("cross_query", &case.cross_query)?,
        cross_keys: save("cross_keys", &case.cross_keys)?,
        text_feature: save("text_feature", &case.text_feature)?,
        vision_embeddings: save("vision_embeddings", &case.vision_embeddings)?,
        label: case.label.clone(),
    };
    let path = dir.join("case.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tokens(n: usize, d: usize) -> Tensor {
        Tensor::matrix(n, d, (0..n * d).map(|i| 1.0 + i as f32).collect()).unwrap()
    }

    #[test]
    fn minimal_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_tensor(&tokens(4, 8), dir.path().join("t.idsl")).unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"tokens":"t.idsl"}"#).unwrap();
        let case = load_case(&path).unwrap();
        assert_eq!((case.n_tokens(), case.dim()), (4, 8));
        assert!(case.cls_attention.is_none() && case.cross_keys.is_none());
        assert!(case.text_feature.is_none() && case.label.is_none());
    }

    #[test]
    fn cls_length_mismatch_names_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        write_tensor(&tokens(4, 8), dir.path().join("t.idsl")).unwrap();
        write_tensor(
            &Tensor::vector(vec![0.2; 5]).unwrap(),
            dir.path().join("a.idsl"),
        )
        .unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"tokens":"t.idsl","cls_attention":"a.idsl"}"#).unwrap();
        let msg = load_case(&path).unwrap_err().to_string();
        assert!(
            msg.contains("cls_attention") && msg.contains("tokens"),
            "{msg}"
        );
        assert!(msg.contains("[5]") && msg.contains("[4, 8]"), "{msg}");
    }

    #[test]
    fn full_manifest_round_trips_through_write_case() {
        let case = Case::new(tokens(3, 2))
            .with_cls_attention(Tensor::vector(vec![0.2, 0.3, 0.5]).unwrap())
            .with_cross(
                Tensor::new(vec![2, 4], vec![1.0; 8]).unwrap(),
                Tensor::new(vec![2, 3, 4], vec![0.5; 24]).unwrap(),
            )
            .with_instruction(
                Tensor::matrix(3, 5, vec![1.0; 15]).unwrap(),
                Tensor::vector(vec![1.0; 5]).unwrap(),
            )
            .with_label("full");
        let dir = tempfile::tempdir().unwrap();
        let path = write_case(&case, dir.path()).unwrap();
        assert_eq!(load_case(&path).unwrap(), case);
    }

    #[test]
    fn manifest_rejects_unknown_and_non_string() {
        let origin = Path::new("m.json");
        assert!(CaseManifest::from_json(&json!({"tokens": "t", "extra": "x"}), origin).is_err());
        assert!(CaseManifest::from_json(&json!({"tokens": 3}), origin).is_err());
        assert!(CaseManifest::from_json(&json!({"tokens": "t", "label": null}), origin).is_err());
        assert!(CaseManifest::from_json(&json!({"label": "x"}), origin).is_err());
        assert!(CaseManifest::from_json(&json!(["tokens"]), origin).is_err());
    }

    #[test]
    fn invariants() {
        let base = Case::new(tokens(3, 2));
        assert!(base.validate().is_ok());
        let neg = base
            .clone()
            .with_cls_attention(Tensor::vector(vec![0.5, -0.1, 0.6]).unwrap());
        assert!(neg.validate().is_err());
        let mut lone_text = base.clone();
        lone_text.text_feature = Some(Tensor::vector(vec![1.0, 0.0]).unwrap());
        assert!(lone_text.validate().is_err());
        let wrong_d = base.clone().with_instruction(
            Tensor::matrix(3, 2, vec![1.0; 6]).unwrap(),
            Tensor::vector(vec![1.0; 3]).unwrap(),
        );
        assert!(wrong_d.validate().is_err());
        let bad_keys = base.with_cross(
            Tensor::vector(vec![1.0; 4]).unwrap(),
            Tensor::matrix(2, 4, vec![1.0; 8]).unwrap(),
        );
        assert!(bad_keys.validate().is_err());
        assert!(Case::new(Tensor::matrix(0, 2, vec![]).unwrap())
            .validate()
            .is_err());
    }
}
