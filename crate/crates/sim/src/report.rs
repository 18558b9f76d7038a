//! CSV output.
//!
//! A results file starts with one `# ` line carrying the generation time and
//! wall time, followed by a header row and the data rows. That first line is
//! the only part that changes between identical runs; [`strip_timestamp`]
//! removes it for comparisons.
//!
//! Columns:
//!
//! | column | meaning |
//! |---|---|
//! | `scenario` | scenario name |
//! | `seed` | experiment seed; environment seeds derive from it |
//! | `point` | index of the sweep point |
//! | `parameter` | swept values as `key=value` pairs joined by `;` |
//! | `scheme` | `robin`, `baseline` or `leakage` |
//! | `iteration` | NLMS iteration for trace rows, empty on summary rows |
//! | `bob_ser`, `eve_ser` | mean SERs; trace rows carry only `eve_ser` |
//! | `eve_ser_std` | spread of Eve's SER over environments |
//! | `security_improvement` | `(eve_robin - eve_baseline) / 0.75`, on `robin` rows |
//! | `prediction_error` | mean relative CSI prediction error, on `robin` rows |
//! | `leakage_bits`, `samples`, `coverage_ratio` | leakage estimate and its sample support |
//! | `environments` | environments behind the row |
//! | `flagged` | frames whose precoder could not be built |
//! | `status` | `ok`, or `error: <message>` for a point that failed |

use std::io::Write;

use crate::error::{Result, SimError};

pub const COLUMNS: [&str; 17] = [
    "scenario",
    "seed",
    "point",
    "parameter",
    "scheme",
    "iteration",
    "bob_ser",
    "eve_ser",
    "eve_ser_std",
    "security_improvement",
    "prediction_error",
    "leakage_bits",
    "samples",
    "coverage_ratio",
    "environments",
    "flagged",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Robin,
    Baseline,
    Leakage,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Robin => "robin",
            Scheme::Baseline => "baseline",
            Scheme::Leakage => "leakage",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "robin" => Some(Scheme::Robin),
            "baseline" => Some(Scheme::Baseline),
            "leakage" => Some(Scheme::Leakage),
            _ => None,
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub scenario: String,
    pub seed: u64,
    pub point: usize,
    pub parameter: String,
    pub scheme: Option<Scheme>,
    pub iteration: Option<usize>,
    pub bob_ser: Option<f64>,
    pub eve_ser: Option<f64>,
    pub eve_ser_std: Option<f64>,
    pub security_improvement: Option<f64>,
    pub prediction_error: Option<f64>,
    pub leakage_bits: Option<f64>,
    pub samples: Option<u64>,
    pub coverage_ratio: Option<f64>,
    pub environments: Option<u64>,
    pub flagged: Option<u64>,
    /// `None` is `ok`; otherwise the error message.
    pub error: Option<String>,
}

impl MetricsRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    fn sort_key(&self) -> (usize, Option<Scheme>, Option<usize>) {
        (self.point, self.scheme, self.iteration)
    }

    fn fields(&self) -> Vec<String> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        vec![
            self.scenario.clone(),
            self.seed.to_string(),
            self.point.to_string(),
            self.parameter.clone(),
            self.scheme.map(|s| s.as_str().to_string()).unwrap_or_default(),
            opt(&self.iteration),
            opt(&self.bob_ser),
            opt(&self.eve_ser),
            opt(&self.eve_ser_std),
            opt(&self.security_improvement),
            opt(&self.prediction_error),
            opt(&self.leakage_bits),
            opt(&self.samples),
            opt(&self.coverage_ratio),
            opt(&self.environments),
            opt(&self.flagged),
            match &self.error {
                None => "ok".to_string(),
                Some(e) => format!("error: {e}"),
            },
        ]
    }

    /// Schema check applied to every row before it is written.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(SimError::Invariant(format!("row point {} {}: {what}", self.point, self.parameter)));
        if self.scenario.is_empty() || self.parameter.is_empty() {
            return bad("empty scenario or parameter".into());
        }
        if self.error.is_some() {
            return Ok(());
        }
        if self.scheme.is_none() {
            return bad("missing scheme".into());
        }
        for (name, v) in [
            ("bob_ser", self.bob_ser),
            ("eve_ser", self.eve_ser),
            ("eve_ser_std", self.eve_ser_std),
            ("prediction_error", self.prediction_error),
        ] {
            if let Some(x) = v {
                if !(0.0..=1.0).contains(&x) && !(name == "prediction_error" && x.is_finite() && x >= 0.0) {
                    return bad(format!("{name} = {x} outside [0, 1]"));
                }
            }
        }
        if let Some(x) = self.security_improvement {
            if !(-4.0 / 3.0..=4.0 / 3.0).contains(&x) {
                return bad(format!("security improvement {x} out of range"));
            }
        }
        if let Some(x) = self.leakage_bits {
            if !(-0.01..=2.01).contains(&x) {
                return bad(format!("leakage {x} outside [-0.01, 2.01] bits"));
            }
        }
        if let Some(x) = self.coverage_ratio {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("coverage ratio {x}"));
            }
        }
        Ok(())
    }
}

/// Sorts `rows` into file order: point, then scheme, then summary before
/// trace rows.
pub fn sort_rows(rows: &mut [MetricsRecord]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Writes the timestamp line, the header and the validated, sorted rows.
pub fn write_csv<W: Write>(mut w: W, header_comment: &str, rows: &[MetricsRecord]) -> Result<()> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    for r in &rows {
        r.validate()?;
    }
    writeln!(w, "# {}", header_comment.replace('\n', " ")).map_err(|e| SimError::io("<csv>", e))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLUMNS)?;
    for r in &rows {
        out.write_record(r.fields())?;
    }
    out.flush().map_err(|e| SimError::io("<csv>", e))?;
    Ok(())
}

/// The file without its first line when that line is the `# ` comment.
pub fn strip_timestamp(text: &str) -> &str {
    match text.strip_prefix("# ") {
        Some(rest) => rest.split_once('\n').map(|(_, body)| body).unwrap_or(""),
        None => text,
    }
}

/// Parses a results file back into records.
pub fn read_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(strip_timestamp(text).as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(SimError::Invariant(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| SimError::Record {
            line,
            message: format!("bad `{}` value `{}`", COLUMNS[i], field(i)),
        };
        fn opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        let f64_at = |i: usize| opt::<f64>(field(i)).map_err(|_| bad(i));
        let status = field(16);
        rows.push(MetricsRecord {
            scenario: field(0).to_string(),
            seed: field(1).parse().map_err(|_| bad(1))?,
            point: field(2).parse().map_err(|_| bad(2))?,
            parameter: field(3).to_string(),
            scheme: if field(4).is_empty() {
                None
            } else {
                Some(Scheme::from_name(field(4)).ok_or_else(|| bad(4))?)
            },
            iteration: opt(field(5)).map_err(|_| bad(5))?,
            bob_ser: f64_at(6)?,
            eve_ser: f64_at(7)?,
            eve_ser_std: f64_at(8)?,
            security_improvement: f64_at(9)?,
            prediction_error: f64_at(10)?,
            leakage_bits: f64_at(11)?,
            samples: opt(field(12)).map_err(|_| bad(12))?,
            coverage_ratio: f64_at(13)?,
            environments: opt(field(14)).map_err(|_| bad(14))?,
            flagged: opt(field(15)).map_err(|_| bad(15))?,
            error: match status {
                "ok" => None,
                s => Some(s.strip_prefix("error: ").ok_or_else(|| bad(16))?.to_string()),
            },
        });
    }
    Ok(rows)
}
