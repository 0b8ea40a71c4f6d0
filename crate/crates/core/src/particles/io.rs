use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::FORMAT_VERSION;
use crate::output::write_csv;

use super::integrator::TrajectoryRecord;
use super::state::ParticleState;

/// Writes the binary `SFLW` dump: 32-byte header (magic, version, d, reserved, N, t)
/// then positions row-major and weights, all little-endian.
pub fn write_state<W: Write>(state: &ParticleState, mut out: W) -> Result<()> {
    out.write_all(b"SFLW")?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(state.dim() as u32).to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    out.write_all(&(state.n() as u64).to_le_bytes())?;
    out.write_all(&state.t().to_le_bytes())?;
    let mut bytes = Vec::with_capacity((state.positions().len() + state.n()) * 8);
    for v in state.positions().iter().chain(state.weights()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_state<R: Read>(mut input: R) -> Result<ParticleState> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[0..4] != b"SFLW" {
        return Err(Error::Format("missing SFLW magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported SFLW version {version}")));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let t = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let mut body = vec![0u8; n * (dim + 1) * 8];
    input.read_exact(&mut body)?;
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ParticleState::from_vector(dim, n, &values, t))
}

pub fn save_state(state: &ParticleState, path: &Path) -> Result<()> {
    write_state(state, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_state(path: &Path) -> Result<ParticleState> {
    read_state(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub const TRAJECTORY_HEADER: [&str; 6] = [
    "t",
    "mean_weight",
    "max_weight",
    "min_weight",
    "min_separation",
    "interaction_energy",
];

/// One CSV row per snapshot.
pub fn write_trajectory_csv<W: Write>(record: &TrajectoryRecord, out: W) -> Result<()> {
    let rows: Vec<Vec<f64>> = record
        .monitors
        .iter()
        .map(|m| {
            vec![
                m.t,
                m.mean_weight,
                m.max_weight,
                m.min_weight,
                m.min_separation,
                m.interaction_energy,
            ]
        })
        .collect();
    write_csv(out, &TRAJECTORY_HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let s = ParticleState::new(3, vec![0.1, 0.2, 0.3, -1.0, 2.0, 0.5], vec![0.5, 1.5], 0.75).unwrap();
        let mut buf = Vec::new();
        write_state(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * 8);
        assert_eq!(read_state(&buf[..]).unwrap(), s);
        buf[2] = 0;
        assert!(matches!(read_state(&buf[..]), Err(Error::Format(_))));
    }
}
