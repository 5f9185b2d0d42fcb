//! Mission reference sources: a spline planned from waypoints, or a table
//! of pre-discretized rows.
//!
//! Waypoint CSV: header `t,x,y,z`. Table CSV: header
//! `t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz,sx,sy,sz`.

use std::io::{Read, Write};
use std::path::Path;

use hopper_core::rigid_body::Vec3;
use hopper_core::trajectory::{plan_spline, PolySpline, TrajectoryError, TrajectorySample, Waypoint, ORDERS};
use thiserror::Error;

pub const WAYPOINT_COLUMNS: [&str; 4] = ["t", "x", "y", "z"];
pub const TABLE_COLUMNS: [&str; 16] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "jx", "jy", "jz", "sx", "sy", "sz",
];

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("unrecognized header '{0}'; expected t,x,y,z or the 16-column table layout")]
    Header(String),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceTrack {
    Spline(PolySpline),
    Table(Vec<TrajectorySample>),
}

impl ReferenceTrack {
    pub fn start_time(&self) -> f64 {
        match self {
            ReferenceTrack::Spline(s) => s.start_time(),
            ReferenceTrack::Table(rows) => rows[0].t,
        }
    }

    pub fn end_time(&self) -> f64 {
        match self {
            ReferenceTrack::Spline(s) => s.end_time(),
            ReferenceTrack::Table(rows) => rows[rows.len() - 1].t,
        }
    }

    /// Spline samples are exact. Table rows are interpolated linearly;
    /// outside the table the end rows are held at rest.
    pub fn sample(&self, t: f64) -> TrajectorySample {
        match self {
            ReferenceTrack::Spline(s) => s.sample(t),
            ReferenceTrack::Table(rows) => {
                let first = &rows[0];
                let last = &rows[rows.len() - 1];
                if t <= first.t {
                    return TrajectorySample::hold(t, first.position());
                }
                if t >= last.t {
                    return TrajectorySample::hold(t, last.position());
                }
                let i = rows.partition_point(|r| r.t <= t) - 1;
                let (a, b) = (&rows[i], &rows[i + 1]);
                let w = (t - a.t) / (b.t - a.t);
                let mut derivatives = [Vec3::zeros(); ORDERS];
                for (k, d) in derivatives.iter_mut().enumerate() {
                    *d = a.derivatives[k] * (1.0 - w) + b.derivatives[k] * w;
                }
                TrajectorySample { t, derivatives }
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, ReferenceError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(input: R) -> Result<Self, ReferenceError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let rows: Vec<Vec<f64>> = reader
            .records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec?;
                rec.iter()
                    .map(|f| {
                        f.parse::<f64>().map_err(|e| ReferenceError::Row {
                            row: i + 1,
                            msg: format!("'{f}': {e}"),
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;

        if header == WAYPOINT_COLUMNS {
            let waypoints: Vec<Waypoint> = rows.iter().map(|r| Waypoint::new(r[0], r[1], r[2], r[3])).collect();
            Ok(ReferenceTrack::Spline(plan_spline(&waypoints)?))
        } else if header == TABLE_COLUMNS {
            if rows.len() < 2 {
                return Err(ReferenceError::Row {
                    row: rows.len(),
                    msg: "a reference table needs at least two rows".into(),
                });
            }
            let mut samples = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                if i > 0 && !(r[0] > rows[i - 1][0]) {
                    return Err(ReferenceError::Row {
                        row: i + 1,
                        msg: "timestamps must increase".into(),
                    });
                }
                let mut derivatives = [Vec3::zeros(); ORDERS];
                for (k, d) in derivatives.iter_mut().enumerate() {
                    *d = Vec3::new(r[1 + 3 * k], r[2 + 3 * k], r[3 + 3 * k]);
                }
                samples.push(TrajectorySample { t: r[0], derivatives });
            }
            Ok(ReferenceTrack::Table(samples))
        } else {
            Err(ReferenceError::Header(header.join(",")))
        }
    }
}

pub fn write_table<W: Write>(out: W, samples: &[TrajectorySample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for s in samples {
        let mut row = vec![s.t.to_string()];
        for d in &s.derivatives {
            row.extend(d.iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const WAYPOINTS: &str = "t,x,y,z\n0,0,0,-1\n2,1,0,-1\n4,1,1,-1.2\n";

    #[test]
    fn loads_waypoints_as_spline() {
        let track = ReferenceTrack::from_reader(WAYPOINTS.as_bytes()).unwrap();
        assert!(matches!(track, ReferenceTrack::Spline(_)));
        assert_eq!((track.start_time(), track.end_time()), (0.0, 4.0));
        assert_relative_eq!(track.sample(2.0).position(), Vec3::new(1.0, 0.0, -1.0), epsilon = 1e-12);
    }

    #[test]
    fn table_round_trip_matches_spline() {
        let ReferenceTrack::Spline(spline) = ReferenceTrack::from_reader(WAYPOINTS.as_bytes()).unwrap() else {
            panic!("expected spline");
        };
        let rows = spline.discretize(100.0).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &rows).unwrap();
        let table = ReferenceTrack::from_reader(buf.as_slice()).unwrap();
        let ReferenceTrack::Table(read) = &table else {
            panic!("expected table");
        };
        assert_eq!(read, &rows);
        // between rows the linear interpolation stays close to the spline
        let t = 1.234;
        assert!((table.sample(t).position() - spline.sample(t).position()).norm() < 1e-4);
        assert_eq!(table.sample(10.0).velocity(), Vec3::zeros());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ReferenceTrack::from_reader("a,b\n1,2\n".as_bytes()),
            Err(ReferenceError::Header(_))
        ));
        assert!(ReferenceTrack::from_reader("t,x,y,z\n0,0,0,0\n".as_bytes()).is_err());
        assert!(ReferenceTrack::from_reader("t,x,y,z\n0,0,0,0\n1,x,0,0\n".as_bytes()).is_err());
    }
}
