//! JSON law specifications.
//!
//! ```json
//! {"kind":"leafed","offspring":[{"p":0.5,"children":[[1,1.0],[0,3.0]]},{"p":0.5,"children":[]}]}
//! {"kind":"multitype","types":"nonneg-int","rules":[{"type":4,"offspring":[{"p":0.2,"children":[5]}]}]}
//! {"kind":"builtin","name":"geometric","mean_type1":1.0}
//! ```
//!
//! Builtins: `geometric`, `two_point`, `deterministic`, `lamination`,
//! `reduced`. A reference is `builtin:NAME`, `file:PATH` or a bare path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::laminations::{self, MIN_TYPE};
use crate::leafed::{LeafedChild, LeafedLaw, LeafedParams, LengthDist};
use crate::multitype::{MultitypeLaw, TypeCode};
use crate::reduction::reduced_params;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutcomeSpec<T> {
    pub p: f64,
    pub children: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(rename = "type")]
    pub ty: TypeCode,
    pub offspring: Vec<OutcomeSpec<TypeCode>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafedSpec {
    offspring: Vec<OutcomeSpec<LeafedChild>>,
    #[serde(default)]
    declared: Option<LeafedParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultitypeSpec {
    #[serde(default)]
    types: Option<String>,
    rules: Vec<RuleSpec>,
    #[serde(default)]
    x0: Option<TypeCode>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometricSpec {
    #[serde(default = "one")]
    mean_type1: f64,
    #[serde(default)]
    type1_length: LengthDist,
    #[serde(default)]
    mean_type0: f64,
    #[serde(default)]
    type0_length: LengthDist,
}

/// `high` type-1 children with probability `p_high`, else `low`, all with
/// length `length`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoPointSpec {
    #[serde(default)]
    low: usize,
    #[serde(default = "two")]
    high: usize,
    #[serde(default = "half")]
    p_high: f64,
    #[serde(default = "one")]
    length: f64,
}

fn two() -> usize {
    2
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeterministicSpec {
    children: Vec<LeafedChild>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReducedSpec {
    #[serde(default)]
    law: Option<Value>,
    #[serde(default)]
    x0: Option<TypeCode>,
}

/// A parsed law.
#[derive(Clone, Debug)]
pub enum Law {
    Leafed(LeafedLaw),
    /// A multitype law with its default root type, if it has one.
    Multitype(MultitypeLaw, Option<TypeCode>),
}

impl Law {
    pub fn leafed(self) -> Result<LeafedLaw> {
        match self {
            Law::Leafed(l) => Ok(l),
            Law::Multitype(..) => Err(Error::InvalidLaw(
                "expected a leafed law, got a multitype law".into(),
            )),
        }
    }

    pub fn multitype(self) -> Result<(MultitypeLaw, Option<TypeCode>)> {
        match self {
            Law::Multitype(l, x0) => Ok((l, x0)),
            Law::Leafed(_) => Err(Error::InvalidLaw(
                "expected a multitype law, got a leafed law".into(),
            )),
        }
    }
}

/// Resolves `builtin:NAME`, `file:PATH` or a bare path.
pub fn load_law(reference: &str) -> Result<Law> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        parse_value(&serde_json::json!({"kind": "builtin", "name": name}))
    } else {
        let path = reference.strip_prefix("file:").unwrap_or(reference);
        let text = std::fs::read_to_string(Path::new(path))?;
        parse_law(&text)
    }
}

pub fn parse_law(json: &str) -> Result<Law> {
    parse_value(&serde_json::from_str(json)?)
}

pub fn parse_value(v: &Value) -> Result<Law> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidLaw("law spec needs a string field \"kind\"".into()))?;
    let mut body = v.clone();
    if let Some(o) = body.as_object_mut() {
        o.remove("kind");
    }
    match kind {
        "leafed" => {
            let s: LeafedSpec = from_value(body)?;
            let law = LeafedLaw::enumerated(
                s.offspring.into_iter().map(|o| (o.p, o.children)).collect(),
            )?;
            Ok(Law::Leafed(match s.declared {
                Some(d) => law.with_declared(d),
                None => law,
            }))
        }
        "multitype" => {
            let s: MultitypeSpec = from_value(body)?;
            if let Some(t) = &s.types {
                if t != "nonneg-int" {
                    return Err(Error::InvalidLaw(format!("unsupported type space {t:?}")));
                }
            }
            let law = MultitypeLaw::rules(
                s.rules
                    .into_iter()
                    .map(|r| {
                        (
                            r.ty,
                            r.offspring.into_iter().map(|o| (o.p, o.children)).collect(),
                        )
                    })
                    .collect(),
            )?;
            Ok(Law::Multitype(law, s.x0))
        }
        "builtin" => {
            let name = body
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    Error::InvalidLaw("builtin law needs a string field \"name\"".into())
                })?
                .to_owned();
            if let Some(o) = body.as_object_mut() {
                o.remove("name");
            }
            builtin(&name, body)
        }
        other => Err(Error::InvalidLaw(format!("unknown law kind {other:?}"))),
    }
}

fn from_value<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidLaw(e.to_string()))
}

fn builtin(name: &str, params: Value) -> Result<Law> {
    match name {
        "geometric" => {
            let s: GeometricSpec = from_value(params)?;
            Ok(Law::Leafed(LeafedLaw::geometric(
                s.mean_type1,
                s.type1_length,
                s.mean_type0,
                s.type0_length,
            )?))
        }
        "two_point" => {
            let s: TwoPointSpec = from_value(params)?;
            if !(0.0..=1.0).contains(&s.p_high) {
                return Err(Error::InvalidLaw(format!(
                    "p_high = {} outside [0, 1]",
                    s.p_high
                )));
            }
            let kids = |k: usize| vec![LeafedChild::new(1, s.length); k];
            let mean = s.low as f64 + s.p_high * (s.high as f64 - s.low as f64);
            let second =
                (1.0 - s.p_high) * (s.low * s.low) as f64 + s.p_high * (s.high * s.high) as f64;
            let law = LeafedLaw::enumerated(vec![
                (1.0 - s.p_high, kids(s.low)),
                (s.p_high, kids(s.high)),
            ])?;
            Ok(Law::Leafed(law.with_declared(LeafedParams {
                m: mean,
                mu: mean * s.length,
                sigma2: second - mean * mean,
            })))
        }
        "deterministic" => {
            let s: DeterministicSpec = from_value(params)?;
            Ok(Law::Leafed(LeafedLaw::deterministic(s.children)?))
        }
        "lamination" => {
            let _: serde_json::Map<String, Value> =
                from_value::<Option<_>>(params)?.unwrap_or_default();
            Ok(Law::Multitype(MultitypeLaw::Lamination, Some(MIN_TYPE)))
        }
        "reduced" => {
            let s: ReducedSpec = from_value(params)?;
            let (law, x0) = match s.law {
                None => (MultitypeLaw::Lamination, Some(MIN_TYPE)),
                Some(v) => parse_value(&v)?.multitype()?,
            };
            let x0 =
                s.x0.or(x0)
                    .ok_or_else(|| Error::InvalidLaw("reduced law needs x0".into()))?;
            let declared = match (&law, x0) {
                (MultitypeLaw::Lamination, x) if x >= MIN_TYPE => {
                    let c = laminations::closed_forms(x)?;
                    Some(reduced_params(c.a, c.b, c.eta2)?)
                }
                _ => None,
            };
            let reduced = LeafedLaw::reduced(law, x0)?;
            Ok(Law::Leafed(match declared {
                Some(d) => reduced.with_declared(d),
                None => reduced,
            }))
        }
        other => Err(Error::InvalidLaw(format!("unknown builtin {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leafed_example() {
        let law = parse_law(
            r#"{"kind":"leafed","offspring":[{"p":0.5,"children":[[1,1.0],[0,3.0]]},{"p":0.5,"children":[]}]}"#,
        )
        .unwrap()
        .leafed()
        .unwrap();
        let e = law.enumerator().unwrap();
        assert_eq!(
            e.outcomes()[0].1,
            vec![LeafedChild::new(1, 1.0), LeafedChild::new(0, 3.0)]
        );
    }

    #[test]
    fn multitype_example() {
        let (law, x0) = parse_law(
            r#"{"kind":"multitype","types":"nonneg-int","rules":[{"type":4,"offspring":[{"p":0.5,"children":[4]},{"p":0.5,"children":[]}]}]}"#,
        )
        .unwrap()
        .multitype()
        .unwrap();
        assert!(law.knows_type(4));
        assert_eq!(x0, None);
    }

    #[test]
    fn builtins() {
        for name in ["geometric", "two_point", "lamination", "reduced"] {
            load_law(&format!("builtin:{name}")).unwrap();
        }
        assert!(load_law("builtin:deterministic").is_err());
        let r = load_law("builtin:reduced").unwrap().leafed().unwrap();
        let d = r.declared.unwrap();
        assert!((d.m - 3.0).abs() < 1e-12);
        assert!((d.sigma2 - 0.6).abs() < 1e-12);
        let g = parse_law(r#"{"kind":"builtin","name":"geometric","mean_type1":1.0,"type1_length":{"dist":"exponential","mean":2.0}}"#)
            .unwrap()
            .leafed()
            .unwrap();
        assert_eq!(g.declared.unwrap().mu, 2.0);
        let t = load_law("builtin:two_point")
            .unwrap()
            .leafed()
            .unwrap()
            .declared
            .unwrap();
        assert_eq!((t.m, t.sigma2), (1.0, 1.0));
    }

    #[test]
    fn unknown_kind_and_fields() {
        assert!(matches!(
            parse_law(r#"{"kind":"weird"}"#),
            Err(Error::InvalidLaw(_))
        ));
        assert!(matches!(
            parse_law(r#"{"offspring":[]}"#),
            Err(Error::InvalidLaw(_))
        ));
        assert!(matches!(
            parse_law(r#"{"kind":"builtin","name":"geometric","mean":1}"#),
            Err(Error::InvalidLaw(_))
        ));
        assert!(matches!(
            load_law("builtin:nope"),
            Err(Error::InvalidLaw(_))
        ));
    }
}
