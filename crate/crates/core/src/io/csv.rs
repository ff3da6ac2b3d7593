//! Optimization history as CSV.

use std::path::Path;

use crate::driver::IterationRecord;
use crate::error::{Error, Result};

pub const HISTORY_HEADER: [&str; 15] = [
    "iter", "z", "F_term", "P_per", "P_reg", "P_hs", "P_vddr", "g1", "Psi", "mass", "gamma_pr", "beta_rho",
    "rho_th_hs", "w2", "wall_ms",
];

fn row(r: &IterationRecord) -> [String; 15] {
    // `Display` for f64 prints the shortest string that parses back exactly.
    let f = |v: f64| v.to_string();
    [
        r.iter.to_string(),
        f(r.z),
        f(r.f_term),
        f(r.p_per),
        f(r.p_reg),
        f(r.p_hs),
        f(r.p_vddr),
        f(r.g1),
        f(r.psi),
        f(r.mass),
        f(r.gamma_pr),
        f(r.beta_rho),
        f(r.rho_th_hs),
        f(r.w2),
        f(r.wall_ms),
    ]
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

pub fn history_to_string(records: &[IterationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(HISTORY_HEADER).expect("in-memory write");
    for r in records {
        w.write_record(row(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_history_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    std::fs::write(path, history_to_string(records)).map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(HISTORY_HEADER) {
        return Err(Error::invalid(format!("{}: unexpected history header", path.display())));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |i: usize| Error::invalid(format!("{}: bad value in column {}", path.display(), HISTORY_HEADER[i]));
        let v: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse::<f64>().map_err(|_| bad(i)))
            .collect::<Result<_>>()?;
        out.push(IterationRecord {
            iter: rec[0].parse().map_err(|_| bad(0))?,
            z: v[1],
            f_term: v[2],
            p_per: v[3],
            p_reg: v[4],
            p_hs: v[5],
            p_vddr: v[6],
            g1: v[7],
            psi: v[8],
            mass: v[9],
            gamma_pr: v[10],
            beta_rho: v[11],
            rho_th_hs: v[12],
            w2: v[13],
            wall_ms: v[14],
        });
    }
    Ok(out)
}
