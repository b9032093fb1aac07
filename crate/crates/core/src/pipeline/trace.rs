//! Trace CSV: `t_ms,kind,fields...`, one record per line.
//!
//! ```text
//! 0,emg,12,-3,0,5,7,-1,0,2
//! 1000,pose,fist
//! 1005,imu,16384,0,0,0,0,0,2048,0,0,0
//! ```
//! Blank lines and lines starting with `#` are skipped. Timestamps must not
//! decrease.

use std::path::Path;

use super::PipelineError;
use crate::myo::{EmgSample, ImuFrame, Pose, EMG_CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Emg(EmgSample),
    Pose(Pose),
    Imu(ImuFrame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub kind: TraceKind,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let fields: Vec<String> = match &self.kind {
            TraceKind::Emg(s) => std::iter::once("emg".to_string())
                .chain(s.channels.iter().map(|v| v.to_string()))
                .collect(),
            TraceKind::Pose(p) => vec!["pose".into(), p.name().into()],
            TraceKind::Imu(f) => std::iter::once("imu".to_string())
                .chain(f.raw().iter().map(|v| v.to_string()))
                .collect(),
        };
        format!("{},{}", self.t_ms, fields.join(","))
    }
}

fn parse_ints<T: std::str::FromStr, const N: usize>(
    fields: &[&str],
    line: usize,
    what: &str,
) -> Result<[T; N], PipelineError> {
    if fields.len() != N {
        return Err(PipelineError::TraceMalformed {
            line,
            reason: format!("{what} record needs {N} values, found {}", fields.len()),
        });
    }
    let mut parsed = Vec::with_capacity(N);
    for f in fields {
        parsed.push(f.trim().parse::<T>().map_err(|_| PipelineError::TraceMalformed {
            line,
            reason: format!("{what} value '{}' out of range or not an integer", f.trim()),
        })?);
    }
    parsed.try_into().map_err(|_| unreachable!("length checked above"))
}

fn parse_line(text: &str, line: usize) -> Result<TraceRecord, PipelineError> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() < 2 {
        return Err(PipelineError::TraceMalformed {
            line,
            reason: "expected t_ms,kind,...".into(),
        });
    }
    let t_ms = fields[0]
        .trim()
        .parse::<u64>()
        .map_err(|_| PipelineError::TraceMalformed {
            line,
            reason: format!("bad timestamp '{}'", fields[0].trim()),
        })?;
    let rest = &fields[2..];
    let kind = match fields[1].trim() {
        "emg" => TraceKind::Emg(EmgSample::new(parse_ints::<i8, EMG_CHANNELS>(rest, line, "emg")?)),
        "imu" => TraceKind::Imu(ImuFrame::from_raw(parse_ints::<i16, 10>(rest, line, "imu")?)),
        "pose" => {
            let [name] = rest else {
                return Err(PipelineError::TraceMalformed {
                    line,
                    reason: "pose record needs exactly one name".into(),
                });
            };
            TraceKind::Pose(
                Pose::from_name(name.trim()).ok_or_else(|| PipelineError::TraceMalformed {
                    line,
                    reason: format!("unknown pose '{}'", name.trim()),
                })?,
            )
        }
        other => {
            return Err(PipelineError::TraceMalformed {
                line,
                reason: format!("unknown record kind '{other}'"),
            })
        }
    };
    Ok(TraceRecord { t_ms, kind })
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, PipelineError> {
    let mut records: Vec<TraceRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = parse_line(trimmed, line)?;
        if let Some(prev) = records.last() {
            if record.t_ms < prev.t_ms {
                return Err(PipelineError::NonMonotonicTime {
                    line,
                    t_ms: record.t_ms,
                    previous_ms: prev.t_ms,
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn ingest_trace(path: &Path) -> Result<Vec<TraceRecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::TraceMalformed {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    parse_trace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_kind() {
        let recs =
            parse_trace("0,emg,0,0,0,0,0,0,0,0\n1000,pose,fist\n1005,imu,16384,0,0,0,0,0,2048,0,0,-16\n").unwrap();
        assert_eq!(
            recs[0],
            TraceRecord {
                t_ms: 0,
                kind: TraceKind::Emg(EmgSample::default())
            }
        );
        assert_eq!(
            recs[1],
            TraceRecord {
                t_ms: 1000,
                kind: TraceKind::Pose(Pose::Fist)
            }
        );
        match &recs[2].kind {
            TraceKind::Imu(f) => {
                assert_eq!(f.orientation()[0], 1.0);
                assert_eq!(f.gyro()[2], -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        for r in &recs {
            assert_eq!(parse_trace(&r.to_line()).unwrap(), vec![r.clone()]);
        }
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let recs = parse_trace("# header\n\n  \n5,pose,rest\n").unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn out_of_order_names_line() {
        let err = parse_trace("10,pose,fist\n# note\n5,pose,rest\n").unwrap_err();
        assert_eq!(
            err,
            PipelineError::NonMonotonicTime {
                line: 3,
                t_ms: 5,
                previous_ms: 10
            }
        );
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn malformed_lines() {
        for (text, line) in [
            ("x,pose,fist\n", 1),
            ("0,emg,1,2,3\n", 1),
            ("0,emg,0,0,0,0,0,0,0,200\n", 1),
            ("0,pose,fist\n1,pose,thumbs_up\n", 2),
            ("0,blink\n", 1),
            ("0,imu,1,2\n", 1),
            ("0\n", 1),
        ] {
            match parse_trace(text) {
                Err(PipelineError::TraceMalformed { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn equal_timestamps_are_allowed() {
        assert_eq!(parse_trace("5,pose,fist\n5,pose,fist\n").unwrap().len(), 2);
    }
}
