//! Flat binary container: `b"ASP1"`, then `N`, `T`, `D` as little-endian
//! `u64`, then `N*T*D` little-endian `f64` in (agent, step, dim) row-major
//! order, then the agent ids, one per line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use super::{default_dim_names, FeaturePanel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ASP1";
pub const PANEL_CSV_SCHEMA: &str = "#schema aumann.panel/1";

pub fn write_panel(panel: &FeaturePanel, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    for dim in [panel.n_agents(), panel.n_steps(), panel.n_dims()] {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for x in panel.features().iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    for id in panel.agent_ids() {
        if id.contains('\n') {
            return Err(Error::invalid(format!("agent id {id:?} contains a newline")));
        }
        w.write_all(id.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel(mut r: impl Read) -> Result<FeaturePanel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
        *d = usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("dims overflow".into()))?;
    }
    let [n, t, d] = dims;
    let len = n
        .checked_mul(t)
        .and_then(|x| x.checked_mul(d))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let mut payload = vec![0u8; len.checked_mul(8).ok_or_else(|| Error::Format("dims overflow".into()))?];
    r.read_exact(&mut payload).map_err(|_| Error::Format("truncated payload".into()))?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut tail = String::new();
    r.read_to_string(&mut tail).map_err(|_| Error::Format("agent ids are not UTF-8".into()))?;
    let ids: Vec<String> = tail.lines().map(str::to_string).collect();
    if ids.len() != n {
        return Err(Error::Format(format!("{} agent ids for {n} agents", ids.len())));
    }
    let features = Array3::from_shape_vec((n, t, d), values).map_err(|e| Error::Format(e.to_string()))?;
    FeaturePanel::new(features, ids, default_dim_names(d))
}

pub fn write_panel_file(panel: &FeaturePanel, path: impl AsRef<Path>) -> Result<()> {
    write_panel(panel, BufWriter::new(File::create(path)?))
}

pub fn read_panel_file(path: impl AsRef<Path>) -> Result<FeaturePanel> {
    read_panel(BufReader::new(File::open(path)?))
}

/// Long-format CSV: `agent_id,step,<dim names...>`.
pub fn write_panel_csv(panel: &FeaturePanel, mut w: impl Write) -> Result<()> {
    writeln!(w, "{PANEL_CSV_SCHEMA}")?;
    let mut cw = csv::Writer::from_writer(w);
    let mut header = vec!["agent_id".to_string(), "step".to_string()];
    header.extend(panel.dim_names().iter().cloned());
    cw.write_record(&header)?;
    let z = panel.features();
    for (i, id) in panel.agent_ids().iter().enumerate() {
        for t in 0..panel.n_steps() {
            let mut row = vec![id.clone(), t.to_string()];
            row.extend((0..panel.n_dims()).map(|k| z[[i, t, k]].to_string()));
            cw.write_record(&row)?;
        }
    }
    cw.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> FeaturePanel {
        let f = Array3::from_shape_fn((3, 2, 3), |(i, t, k)| (i + 2 * t) as f64 * 0.5 + k as f64);
        FeaturePanel::new(f, vec!["x".into(), "y z".into(), "w".into()], default_dim_names(3)).unwrap()
    }

    #[test]
    fn round_trip() {
        let p = panel();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ASP1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 3);
        assert_eq!(read_panel(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_panel(&panel(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_panel(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_panel(&buf[..40]), Err(Error::Format(_))));
        let mut short_ids = buf.clone();
        short_ids.truncate(buf.len() - 2);
        assert!(read_panel(short_ids.as_slice()).is_err());
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        write_panel_csv(&panel(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], PANEL_CSV_SCHEMA);
        assert_eq!(lines[1], "agent_id,step,reach,activity,resonance");
        assert_eq!(lines.len(), 2 + 6);
    }
}
