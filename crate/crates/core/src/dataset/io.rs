//! Trajectory file format.
//!
//! ```text
//! N=2 T=3 m0=2 block_lengths=2,2 action_count=2 r_max=1.0000000000000000e0
//! traj_id,t,x_1,x_2,z_1,z_2,z_3,z_4,action,reward
//! ...
//! ```
//!
//! The first line is the manifest. Every following non-empty line is one
//! record. Reals are written in scientific notation with enough digits to
//! round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use super::{MixedState, Step, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::scalar::{fmt_exact, Real};
use crate::textio::{self, join_list, KeyValues};

/// Which record column holds which field. Column indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub traj_id: usize,
    pub time: usize,
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    pub action: usize,
    pub reward: usize,
}

impl ColumnSchema {
    /// `traj_id,t,x_1..x_{m0},z_1..z_m,action,reward`
    pub fn canonical(m0: usize, m: usize) -> Self {
        Self {
            traj_id: 0,
            time: 1,
            x: (2..2 + m0).collect(),
            z: (2 + m0..2 + m0 + m).collect(),
            action: 2 + m0 + m,
            reward: 3 + m0 + m,
        }
    }

    fn width(&self) -> usize {
        [self.traj_id, self.time, self.action, self.reward]
            .into_iter()
            .chain(self.x.iter().copied())
            .chain(self.z.iter().copied())
            .max()
            .unwrap_or(0)
            + 1
    }
}

/// Parses `traj_id=0,t=1,x=2:4,z=4:40,action=40,reward=41`. Ranges are
/// half-open; single indices may also be joined with `+` (`x=5+9`).
impl FromStr for ColumnSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("bad column mapping {part:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let bad = |k: &str, v: &str| Error::Schema(format!("column {k}: cannot parse {v:?}"));
        let single = |k: &str| -> Result<usize> {
            let v = fields
                .get(k)
                .ok_or_else(|| Error::Schema(format!("column mapping is missing {k:?}")))?;
            v.parse().map_err(|_| bad(k, v))
        };
        let many = |k: &str| -> Result<Vec<usize>> {
            let v = fields
                .get(k)
                .ok_or_else(|| Error::Schema(format!("column mapping is missing {k:?}")))?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            if let Some((a, b)) = v.split_once(':') {
                let a: usize = a.parse().map_err(|_| bad(k, v))?;
                let b: usize = b.parse().map_err(|_| bad(k, v))?;
                return Ok((a..b).collect());
            }
            v.split('+')
                .map(|t| t.parse().map_err(|_| bad(k, v)))
                .collect()
        };
        Ok(Self {
            traj_id: single("traj_id")?,
            time: single("t")?,
            x: many("x")?,
            z: many("z")?,
            action: single("action")?,
            reward: single("reward")?,
        })
    }
}

struct Manifest<T> {
    n: usize,
    horizon: usize,
    m0: usize,
    block_lengths: Vec<usize>,
    action_count: usize,
    r_max: T,
}

impl<T: Real> Manifest<T> {
    fn parse(line: &str) -> Result<Self> {
        let kv = KeyValues::parse(line, 1)?;
        Ok(Self {
            n: kv.parse_value("N")?,
            horizon: kv.parse_value("T")?,
            m0: kv.parse_value("m0")?,
            block_lengths: kv.parse_list("block_lengths")?,
            action_count: kv.parse_value("action_count")?,
            r_max: kv.parse_value("r_max")?,
        })
    }
}

/// Reads a trajectory file. With `schema = None` the canonical column layout
/// implied by the manifest is used.
pub fn load_trajectories<T: Real>(
    path: &Path,
    schema: Option<&ColumnSchema>,
) -> Result<TrajectoryDataset<T>> {
    let text = textio::read_file(path)?;
    parse_trajectories(&text, schema)
}

pub(crate) fn parse_trajectories<T: Real>(
    text: &str,
    schema: Option<&ColumnSchema>,
) -> Result<TrajectoryDataset<T>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty file: missing manifest line".into()))?;
    let manifest = Manifest::<T>::parse(header)?;
    let m: usize = manifest.block_lengths.iter().sum();
    let canonical;
    let schema = match schema {
        Some(s) => s,
        None => {
            canonical = ColumnSchema::canonical(manifest.m0, m);
            &canonical
        }
    };
    if schema.x.len() != manifest.m0 || schema.z.len() != m {
        return Err(Error::Schema(format!(
            "column mapping has {} x and {} z columns, manifest declares m0={} m={m}",
            schema.x.len(),
            schema.z.len(),
            manifest.m0
        )));
    }
    let blocks: Arc<[usize]> = Arc::from(manifest.block_lengths.clone());
    let needed = schema.width();
    let mut width: Option<usize> = None;
    // traj id -> (first-seen order, steps keyed by t)
    let mut groups: BTreeMap<String, (usize, BTreeMap<usize, Step<T>>)> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => {
                if cols.len() < needed {
                    return Err(Error::Schema(format!(
                        "line {line_no}: record has {} columns, mapping needs {needed}",
                        cols.len()
                    )));
                }
                width = Some(cols.len());
            }
            Some(w) if w != cols.len() => {
                return Err(Error::Dimension(format!(
                    "line {line_no}: record has {} columns, earlier records have {w}",
                    cols.len()
                )));
            }
            Some(_) => {}
        }
        let id = cols[schema.traj_id].to_string();
        let t: usize = cols[schema.time].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid time index {:?}", cols[schema.time]),
        })?;
        let x = schema
            .x
            .iter()
            .map(|&c| textio::parse_real(cols[c], line_no))
            .collect::<Result<Vec<T>>>()?;
        let z = schema
            .z
            .iter()
            .map(|&c| textio::parse_real(cols[c], line_no))
            .collect::<Result<Vec<T>>>()?;
        let action: usize = cols[schema.action].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid action {:?}", cols[schema.action]),
        })?;
        let reward: T = textio::parse_real(cols[schema.reward], line_no)?;
        if !(reward.abs() <= manifest.r_max) {
            return Err(Error::RewardBound {
                traj_id: id,
                t,
                reward: reward.as_f64(),
                r_max: manifest.r_max.as_f64(),
            });
        }
        let order = groups.len();
        let (_, steps) = groups.entry(id.clone()).or_insert((order, BTreeMap::new()));
        let step = Step {
            state: MixedState::new(x, z, blocks.clone())?,
            action,
            reward,
        };
        if steps.insert(t, step).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate time index {t} for trajectory {id}"),
            });
        }
    }
    let mut ordered: Vec<(usize, Trajectory<T>)> = groups
        .into_iter()
        .map(|(id, (order, steps))| {
            (
                order,
                Trajectory {
                    id,
                    steps: steps.into_values().collect(),
                },
            )
        })
        .collect();
    ordered.sort_by_key(|(o, _)| *o);
    let trajectories: Vec<Trajectory<T>> = ordered.into_iter().map(|(_, t)| t).collect();
    if trajectories.len() != manifest.n {
        return Err(Error::Dimension(format!(
            "manifest declares N={}, file holds {} trajectories",
            manifest.n,
            trajectories.len()
        )));
    }
    let ds = TrajectoryDataset::new(trajectories, manifest.action_count, manifest.r_max)?;
    if ds.horizon() != manifest.horizon {
        return Err(Error::Dimension(format!(
            "manifest declares T={}, trajectories have {} steps",
            manifest.horizon,
            ds.horizon()
        )));
    }
    Ok(ds)
}

pub(crate) fn render_trajectories<T: Real>(ds: &TrajectoryDataset<T>) -> String {
    let mut kv = KeyValues::new();
    kv.push("N", ds.n_traj())
        .push("T", ds.horizon())
        .push("m0", ds.m0())
        .push("block_lengths", join_list(ds.block_lengths()))
        .push("action_count", ds.action_count())
        .push("r_max", fmt_exact(ds.r_max()));
    let mut out = kv.to_line();
    out.push('\n');
    for traj in ds.trajectories() {
        for (t, step) in traj.steps.iter().enumerate() {
            let _ = write!(out, "{},{t}", traj.id);
            for &v in step.state.x.iter().chain(&step.state.z) {
                let _ = write!(out, ",{}", fmt_exact(v));
            }
            let _ = writeln!(out, ",{},{}", step.action, fmt_exact(step.reward));
        }
    }
    out
}

pub fn save_trajectories<T: Real>(ds: &TrajectoryDataset<T>, path: &Path) -> Result<()> {
    textio::write_file(path, &render_trajectories(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny_dataset;

    #[test]
    fn well_formed_file() {
        let text = "N=2 T=3 m0=2 block_lengths=4 action_count=2 r_max=1\n\
            a,0,1,2,0,0,0,0,0,0.5\n\
            a,1,1,2,0,0,0,1,1,0.5\n\
            a,2,1,2,0,0,1,0,0,-0.5\n\
            b,2,1,2,0,0,0,0,1,0\n\
            b,0,1,2,0,0,0,0,0,0\n\
            b,1,1,2,0,0,0,0,1,0\n";
        let ds = parse_trajectories::<f64>(text, None).unwrap();
        assert_eq!((ds.n_traj(), ds.horizon()), (2, 3));
        assert_eq!(ds.trajectories()[0].id, "a");
        // sorted by time index
        assert_eq!(ds.trajectories()[1].steps[2].action, 1);
        assert_eq!(ds.trajectories()[0].steps[2].state.z, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ragged_is_rejected() {
        let text = "N=2 T=3 m0=0 block_lengths=1 action_count=2 r_max=1\n\
            a,0,0,0,0\na,1,0,0,0\na,2,0,0,0\nb,0,0,0,0\nb,1,0,0,0\n";
        assert!(matches!(
            parse_trajectories::<f64>(text, None),
            Err(Error::RaggedTrajectory { .. })
        ));
    }

    #[test]
    fn schema_and_dimension_errors() {
        let missing_key = "N=1 T=2 m0=0 action_count=2 r_max=1\na,0,0,0,0\n";
        assert!(matches!(
            parse_trajectories::<f64>(missing_key, None),
            Err(Error::Schema(_))
        ));
        let missing_cols = "N=1 T=2 m0=0 block_lengths=2 action_count=2 r_max=1\na,0,0,0,0\n";
        assert!(matches!(
            parse_trajectories::<f64>(missing_cols, None),
            Err(Error::Schema(_))
        ));
        let inconsistent =
            "N=1 T=2 m0=0 block_lengths=1 action_count=2 r_max=1\na,0,0,0,0\na,1,0,0,0,9\n";
        assert!(matches!(
            parse_trajectories::<f64>(inconsistent, None),
            Err(Error::Dimension(_))
        ));
        let bound = "N=1 T=2 m0=0 block_lengths=1 action_count=2 r_max=1\na,0,0,0,1.5\na,1,0,0,0\n";
        assert!(matches!(
            parse_trajectories::<f64>(bound, None),
            Err(Error::RewardBound { .. })
        ));
    }

    #[test]
    fn custom_schema() {
        // reward,action,z,t,id
        let text = "N=1 T=2 m0=0 block_lengths=1 action_count=2 r_max=1\n\
            0.25,1,3.5,0,p\n-0.25,0,4.5,1,p\n";
        let schema: ColumnSchema = "traj_id=4,t=3,x=,z=2:3,action=1,reward=0".parse().unwrap();
        let ds = parse_trajectories::<f64>(text, Some(&schema)).unwrap();
        assert_eq!(ds.trajectories()[0].steps[1].state.z, vec![4.5]);
        assert_eq!(ds.trajectories()[0].steps[0].action, 1);
        assert!("traj_id=0,t=1".parse::<ColumnSchema>().is_err());
    }

    #[test]
    fn render_parse_round_trip() {
        let ds = tiny_dataset(3, 4);
        let text = render_trajectories(&ds);
        let back = parse_trajectories::<f64>(&text, None).unwrap();
        assert_eq!(back, ds);
        assert_eq!(render_trajectories(&back), text);
    }
}
