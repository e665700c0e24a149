use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::SolverSettings;
use crate::schedule::ScheduleSpec;

/// Which process produced a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Ode,
    Sgd,
    Hsgd,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Ode => "ode",
            CurveKind::Sgd => "sgd",
            CurveKind::Hsgd => "hsgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ode" => Some(CurveKind::Ode),
            "sgd" => Some(CurveKind::Sgd),
            "hsgd" => Some(CurveKind::Hsgd),
            _ => None,
        }
    }
}

/// Projections onto the four zero-one blocks (`00, 01, 10, 11`); `None` for
/// empty blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub m: [Option<f64>; 4],
    pub v: [Option<f64>; 4],
}

/// One recorded time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub loss: f64,
    /// Overlap of the first output with the first class mean.
    pub m: f64,
    /// Mean squared norm of the iterate (or of `X - X*` for square loss).
    pub v: f64,
    /// Per-class preactivation variance `tr B_i`.
    pub b: Vec<f64>,
    pub blocks: Option<BlockStats>,
    /// `m / sqrt(V)`, zero when `V = 0`.
    pub align: f64,
}

/// Provenance carried alongside a curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub kind: CurveKind,
    pub seed: Option<u64>,
    pub dim: usize,
    pub model_hash: String,
    pub task: String,
    pub schedule: Option<ScheduleSpec>,
    pub solver: Option<SolverSettings>,
}

impl CurveMeta {
    pub fn new(kind: CurveKind) -> Self {
        Self {
            kind,
            seed: None,
            dim: 0,
            model_hash: String::new(),
            task: String::new(),
            schedule: None,
            solver: None,
        }
    }
}

/// A learning curve on a strictly increasing time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub meta: CurveMeta,
    pub rows: Vec<CurveRow>,
}

const BLOCK_COLUMNS: [&str; 8] = ["m00", "m01", "m10", "m11", "v00", "v01", "v10", "v11"];

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl LearningCurve {
    pub fn new(meta: CurveMeta) -> Self {
        Self {
            meta,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&CurveRow> {
        self.rows.last()
    }

    fn num_b(&self) -> usize {
        self.rows.first().map_or(0, |r| r.b.len())
    }

    /// Names of the numeric columns present in every row.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["loss", "m", "V"].iter().map(|s| s.to_string()).collect();
        names.extend((1..=self.num_b()).map(|i| format!("B{i}")));
        for name in BLOCK_COLUMNS {
            if self.column(name).is_some() {
                names.push(name.to_string());
            }
        }
        names.push("align".into());
        names
    }

    /// Values of a numeric column; `None` if unknown or missing in any row.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick = |r: &CurveRow| -> Option<f64> {
            match name {
                "t" => Some(r.t),
                "loss" => Some(r.loss),
                "m" => Some(r.m),
                "V" => Some(r.v),
                "align" => Some(r.align),
                _ => {
                    if let Some(i) = name.strip_prefix('B').and_then(|s| s.parse::<usize>().ok()) {
                        return r.b.get(i.checked_sub(1)?).copied();
                    }
                    let k = BLOCK_COLUMNS.iter().position(|c| *c == name)?;
                    let blocks = r.blocks.as_ref()?;
                    if k < 4 {
                        blocks.m[k]
                    } else {
                        blocks.v[k - 4]
                    }
                }
            }
        };
        if self.rows.is_empty() {
            return None;
        }
        self.rows.iter().map(pick).collect()
    }

    /// Writes the CSV schema `t, loss, m, V, B1..Bk, m00..m11, v00..v11,
    /// align, seed, kind`; absent values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.num_b();
        let mut header: Vec<String> = ["t", "loss", "m", "V"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=k).map(|i| format!("B{i}")));
        header.extend(BLOCK_COLUMNS.iter().map(|s| s.to_string()));
        header.extend(["align", "seed", "kind"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        let seed = self.meta.seed.map(|s| s.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.t.to_string(), r.loss.to_string(), r.m.to_string(), r.v.to_string()];
            rec.extend(r.b.iter().map(|x| x.to_string()));
            let blocks = r.blocks.unwrap_or_default();
            rec.extend(blocks.m.iter().chain(&blocks.v).map(|x| fmt_opt(*x)));
            rec.push(r.align.to_string());
            rec.push(seed.clone());
            rec.push(self.meta.kind.as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| e.context(format!("writing {}", path.display())))
    }

    /// Parses the CSV schema written by [`Self::write_csv`]. Only `kind` and
    /// `seed` survive in the metadata.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let find = |name: &str| header.iter().position(|h| h == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::invalid("csv", format!("missing column `{name}`")))
        };
        let (ti, li, mi, vi, ai) = (need("t")?, need("loss")?, need("m")?, need("V")?, need("align")?);
        let b_cols: Vec<usize> = (1..)
            .map(|i| find(&format!("B{i}")))
            .take_while(|c| c.is_some())
            .flatten()
            .collect();
        let block_cols: Vec<Option<usize>> = BLOCK_COLUMNS.iter().map(|c| find(c)).collect();
        let (seed_col, kind_col) = (find("seed"), find("kind"));

        let parse = |s: &str, col: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("csv", format!("bad number `{s}` in column `{col}`")))
        };
        let mut meta = CurveMeta::new(CurveKind::Ode);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).unwrap_or("");
            let mut blocks = BlockStats::default();
            let mut any_block = false;
            for (k, col) in block_cols.iter().enumerate() {
                if let Some(c) = col {
                    let s = get(*c);
                    if !s.trim().is_empty() {
                        let v = parse(s, BLOCK_COLUMNS[k])?;
                        any_block = true;
                        if k < 4 {
                            blocks.m[k] = Some(v);
                        } else {
                            blocks.v[k - 4] = Some(v);
                        }
                    }
                }
            }
            if let Some(c) = kind_col {
                if let Some(kind) = CurveKind::parse(get(c).trim()) {
                    meta.kind = kind;
                }
            }
            if let Some(c) = seed_col {
                let s = get(c).trim();
                if !s.is_empty() {
                    meta.seed = Some(
                        s.parse()
                            .map_err(|_| Error::invalid("csv", format!("bad seed `{s}`")))?,
                    );
                }
            }
            rows.push(CurveRow {
                t: parse(get(ti), "t")?,
                loss: parse(get(li), "loss")?,
                m: parse(get(mi), "m")?,
                v: parse(get(vi), "V")?,
                b: b_cols
                    .iter()
                    .map(|&c| parse(get(c), "B"))
                    .collect::<Result<_>>()?,
                blocks: any_block.then_some(blocks),
                align: parse(get(ai), "align")?,
            });
        }
        if rows.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(Error::invalid("csv", "time column must be strictly increasing"));
        }
        Ok(Self { meta, rows })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
            .map_err(|e| e.context(format!("reading {}", path.display())))
    }

    /// Linear interpolation of `column` at time `t` (clamped to the ends).
    pub fn interpolate(&self, column: &[f64], t: f64) -> f64 {
        let times: Vec<f64> = self.times();
        interp(&times, column, t)
    }
}

fn interp(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|s| *s <= t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

/// Distance between two curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `max_t |a(t) - b(t)|`.
    Sup,
    /// Root mean square over the common time span (trapezoidal rule).
    L2,
}

/// Per-column distance between two curves over their common time range.
///
/// The finer curve is linearly interpolated onto the grid points of the
/// coarser one that lie in the overlap. Columns missing from either curve
/// are skipped.
pub fn compare_curves(
    a: &LearningCurve,
    b: &LearningCurve,
    metric: Metric,
) -> Result<Vec<(String, f64)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("curve", "cannot compare an empty curve"));
    }
    let (ta, tb) = (a.times(), b.times());
    let lo = ta[0].max(tb[0]);
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    if lo > hi {
        return Err(Error::DisjointCurves {
            a0: ta[0],
            a1: ta[ta.len() - 1],
            b0: tb[0],
            b1: tb[tb.len() - 1],
        });
    }
    let inside = |ts: &[f64]| ts.iter().filter(|t| **t >= lo && **t <= hi).count();
    let (coarse, fine) = if inside(&ta) <= inside(&tb) { (a, b) } else { (b, a) };
    let ct = coarse.times();
    let ft = fine.times();
    let idx: Vec<usize> = (0..ct.len()).filter(|&i| ct[i] >= lo && ct[i] <= hi).collect();
    let ts: Vec<f64> = idx.iter().map(|&i| ct[i]).collect();

    let mut out = Vec::new();
    for name in a.column_names() {
        let (Some(ca), Some(cf)) = (coarse.column(&name), fine.column(&name)) else {
            continue;
        };
        let diffs: Vec<f64> = idx
            .iter()
            .map(|&i| (ca[i] - interp(&ft, &cf, ct[i])).abs())
            .collect();
        let value = match metric {
            Metric::Sup => diffs.iter().copied().fold(0.0, f64::max),
            Metric::L2 => {
                let span = hi - lo;
                if span <= 0.0 || ts.len() < 2 {
                    diffs[0]
                } else {
                    let integral: f64 = ts
                        .windows(2)
                        .zip(diffs.windows(2))
                        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] * d[0] + d[1] * d[1]))
                        .sum();
                    (integral / span).sqrt()
                }
            }
        };
        out.push((name, value));
    }
    Ok(out)
}
