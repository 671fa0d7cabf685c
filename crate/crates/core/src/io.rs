//! Configuration parsing and result emission.
//!
//! Floats are written in shortest round-trip form, so identical inputs give
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conjugacy::{ConjugacyReport, ConjugacyTable};
use crate::deform::{DeformationTrace, PeriodicContinuation};
use crate::error::{Error, Result};
use crate::map::{DirectionField, FamilyTerm, MapFamily, PiecewiseMap};
use crate::scan::ScanResult;

pub const SCHEMA_VERSION: u32 = 1;

/// A built-in map name or explicit branch coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Named(String),
    Explicit(PiecewiseMap),
}

impl MapSpec {
    pub fn build(&self) -> Result<PiecewiseMap> {
        match self {
            MapSpec::Explicit(f) => Ok(f.clone()),
            MapSpec::Named(name) => match name.as_str() {
                "full_tent" => Ok(PiecewiseMap::full_tent()),
                "golden_tent" => Ok(PiecewiseMap::golden_tent()),
                other => Err(Error::Config(format!("unknown map {other:?}"))),
            },
        }
    }
}

/// A named field or explicit branch coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named(String),
    Explicit(DirectionField),
}

impl FieldSpec {
    pub fn build(&self) -> Result<DirectionField> {
        match self {
            FieldSpec::Explicit(v) => Ok(v.clone()),
            FieldSpec::Named(name) => match name.as_str() {
                "bump" | "1-x^2" => Ok(DirectionField::bump()),
                "odd_bump" | "x(1-x^2)" => Ok(DirectionField::odd_bump()),
                "quartic_bump" | "(1-x^2)x^2" => Ok(DirectionField::quartic_bump()),
                "tent" => Ok(DirectionField::tent()),
                "zero" => Ok(DirectionField::zero()),
                "one" => Ok(DirectionField::constant(1.0)),
                other => Err(Error::Config(format!("unknown field {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSpec {
    pub field: FieldSpec,
    /// Coefficients of `t, t^2, ...`.
    #[serde(default = "default_powers")]
    pub t_powers: Vec<f64>,
}

fn default_powers() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub base: MapSpec,
    pub directions: Vec<DirectionSpec>,
    pub domain: (f64, f64),
}

impl FamilyConfig {
    pub fn build(&self) -> Result<MapFamily> {
        let terms = self
            .directions
            .iter()
            .map(|d| {
                Ok(FamilyTerm {
                    field: d.field.build()?,
                    t_coeffs: d.t_powers.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MapFamily::new(self.base.build()?, terms, self.domain)
    }

    pub fn from_family(f: &MapFamily) -> Self {
        FamilyConfig {
            base: MapSpec::Explicit(f.base.clone()),
            directions: f
                .terms
                .iter()
                .map(|t| DirectionSpec {
                    field: FieldSpec::Explicit(t.field.clone()),
                    t_powers: t.t_coeffs.clone(),
                })
                .collect(),
            domain: f.domain,
        }
    }
}

impl serde::Serialize for MapFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyConfig::from_family(self).serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for MapFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FamilyConfig::deserialize(d)?
            .build()
            .map_err(serde::de::Error::custom)
    }
}

/// Uniform grid description, `n` nodes on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Input for every CLI subcommand; each reads the keys it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub map: Option<MapSpec>,
    /// Second map, for conjugacy.
    #[serde(default)]
    pub target: Option<MapSpec>,
    /// The direction `v`.
    #[serde(default)]
    pub field: Option<FieldSpec>,
    /// The auxiliary direction `w`.
    #[serde(default)]
    pub w: Option<FieldSpec>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub period: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    /// Conjugacy and scan against the deformed family `f_t + b(t) w`.
    #[serde(default)]
    pub deformed: bool,
    /// Parameter of the conjugacy target inside a deformed family.
    #[serde(default)]
    pub t: Option<f64>,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn map(&self) -> Result<PiecewiseMap> {
        self.map
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"map\"".into()))?
            .build()
    }

    pub fn field(&self) -> Result<DirectionField> {
        self.field
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"field\"".into()))?
            .build()
    }

    pub fn w(&self) -> Result<Option<DirectionField>> {
        self.w.as_ref().map(FieldSpec::build).transpose()
    }

    pub fn family(&self) -> Result<MapFamily> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"family\"".into()))?
            .build()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    data: &'a T,
}

/// `{"schema_version", "kind", "data"}`, pretty-printed with a trailing newline.
pub fn write_json(path: &Path, kind: &str, data: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(
        &mut out,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            kind,
            data,
        },
    )?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scan_csv(path: &Path, scan: &ScanResult) -> Result<()> {
    write_csv(
        path,
        &["t", "kneading", "relations", "J", "J_tail", "class", "flags"],
        scan.records.iter().map(|r| {
            vec![
                num(r.t),
                r.kneading.clone(),
                r.relations_text(),
                num(r.j),
                num(r.j_tail),
                r.class.to_string(),
                r.flags.join(";"),
            ]
        }),
    )
}

pub fn write_trace_csv(path: &Path, trace: &DeformationTrace) -> Result<()> {
    write_csv(
        path,
        &["t", "b", "d", "J_residual", "relation_residual"],
        trace.samples.iter().map(|s| {
            vec![
                num(s.t),
                num(s.b),
                num(s.d),
                num(s.j_residual),
                opt_num(s.relation_residual),
            ]
        }),
    )
}

pub fn write_continuation_csv(path: &Path, c: &PeriodicContinuation) -> Result<()> {
    write_csv(
        path,
        &["t", "b", "d", "J_residual", "relation_residual"],
        c.nodes.iter().map(|n| {
            vec![num(n.t), num(n.b), num(n.slope), String::new(), num(n.residual)]
        }),
    )
}

/// Whitespace-separated `(t, b)` pairs for plotting tools.
pub fn write_plot_data(path: &Path, points: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# t b")?;
    for (t, b) in points {
        writeln!(out, "{} {}", num(t), num(b))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_conjugacy_csv(path: &Path, table: &ConjugacyTable, report: &ConjugacyReport) -> Result<()> {
    write_csv(
        path,
        &["x", "h", "depth", "bound", "residual"],
        table.entries.iter().map(|e| {
            let residual = report
                .residuals
                .iter()
                .find(|r| r.x == e.x)
                .map(|r| r.residual);
            vec![num(e.x), num(e.h), e.depth.to_string(), num(e.bound), opt_num(residual)]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_and_explicit_maps() {
        let cfg = RunConfig::from_json_str(r#"{"map": "golden_tent"}"#).unwrap();
        assert_eq!(cfg.map().unwrap(), PiecewiseMap::golden_tent());
        let cfg = RunConfig::from_json_str(r#"{"map": {"left": [1, 2], "right": [1, -2], "k": 2}}"#).unwrap();
        assert_eq!(cfg.map().unwrap(), PiecewiseMap::full_tent());
        let cfg = RunConfig::from_json_str(r#"{"map": "logistic"}"#).unwrap();
        assert!(matches!(cfg.map(), Err(Error::Config(_))));
    }

    #[test]
    fn family_config_round_trip() {
        let text = r#"{"family": {"base": "golden_tent",
            "directions": [{"field": {"left": [1, 0, -1], "right": [1, 0, -1]}, "t_powers": [1]}],
            "domain": [-0.02, 0.02]}}"#;
        let fam = RunConfig::from_json_str(text).unwrap().family().unwrap();
        assert_eq!(fam, MapFamily::linear(PiecewiseMap::golden_tent(), DirectionField::bump(), 0.02).unwrap());
        let json = serde_json::to_string(&fam).unwrap();
        let back: MapFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn boundary_nonzero_family_direction_rejected() {
        let text = r#"{"family": {"base": "golden_tent", "directions": [{"field": "one"}], "domain": [-0.02, 0.02]}}"#;
        assert!(RunConfig::from_json_str(text).unwrap().family().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json_str(r#"{"mapp": "golden_tent"}"#).is_err());
    }

    #[test]
    fn shortest_round_trip_numbers() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(-0.7639320225002103).parse::<f64>().unwrap(), -0.7639320225002103);
    }

    #[test]
    fn unwritable_path_errors() {
        let err = write_json(Path::new("/nonexistent-dir/x.json"), "test", &1).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn json_envelope_has_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_json(&p, "value", &vec![0.5, 2.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["kind"], "value");
    }
}
