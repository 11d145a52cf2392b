//! One JSON object per frame:
//! `{"frame": n, "persons": [{"id": i, "score": s, "joints": {"name": [x, y, z, score] | null}}]}`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Joint, LimbTopology, PoseSkeleton};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub id: usize,
    pub score: f64,
    pub joints: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub persons: Vec<PersonRecord>,
}

impl FrameRecord {
    pub fn from_skeletons(frame: usize, skeletons: &[PoseSkeleton], topo: &LimbTopology) -> Self {
        let persons = skeletons
            .iter()
            .map(|s| {
                let joints = topo
                    .keypoint_names()
                    .iter()
                    .zip(&s.joints)
                    .map(|(name, j)| {
                        let v = match j {
                            Some(j) => serde_json::json!([j.x, j.y, j.z, j.score]),
                            None => Value::Null,
                        };
                        (name.clone(), v)
                    })
                    .collect();
                PersonRecord {
                    id: s.person_id,
                    score: s.total_score,
                    joints,
                }
            })
            .collect();
        FrameRecord { frame, persons }
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn skeletons(&self, topo: &LimbTopology) -> Result<Vec<PoseSkeleton>> {
        self.persons
            .iter()
            .map(|p| {
                let mut joints = vec![None; topo.num_keypoints()];
                for (name, v) in &p.joints {
                    let k = topo
                        .index_of(name)
                        .ok_or_else(|| Error::Parse(format!("unknown joint {name:?}")))?;
                    joints[k] = match v {
                        Value::Null => None,
                        Value::Array(a) if a.len() == 4 => {
                            let f = |i: usize| {
                                a[i].as_f64().ok_or_else(|| {
                                    Error::Parse(format!("non-numeric joint value for {name}"))
                                })
                            };
                            Some(Joint {
                                x: f(0)?,
                                y: f(1)?,
                                z: f(2)?,
                                score: f(3)?,
                            })
                        }
                        _ => return Err(Error::Parse(format!("bad joint entry for {name}"))),
                    };
                }
                Ok(PoseSkeleton {
                    person_id: p.id,
                    joints,
                    total_score: p.score,
                    clamped: false,
                })
            })
            .collect()
    }
}

pub fn parse_frame_record(line: &str, topo: &LimbTopology) -> Result<(usize, Vec<PoseSkeleton>)> {
    let rec: FrameRecord = serde_json::from_str(line)?;
    let skeletons = rec.skeletons(topo)?;
    Ok((rec.frame, skeletons))
}
