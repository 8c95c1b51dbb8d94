use std::io::{BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::{MeshError, SegmentMesh};

const SIDECAR_VERSION: u32 = 1;

/// Per-vertex generating parameters, index-aligned with the OBJ vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSidecar {
    pub format_version: u32,
    pub theta_deg: Vec<f64>,
    pub h_mm: Vec<f64>,
}

/// `v x y z` and 1-based `f i j k` lines.
pub fn write_obj(mesh: &SegmentMesh, out: impl Write) -> Result<(), MeshError> {
    let mut w = BufWriter::new(out);
    for v in &mesh.vertices {
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_params_sidecar(mesh: &SegmentMesh, out: impl Write) -> Result<(), MeshError> {
    let sidecar = ParamsSidecar {
        format_version: SIDECAR_VERSION,
        theta_deg: mesh.params.iter().map(|p| p.theta).collect(),
        h_mm: mesh.params.iter().map(|p| p.h).collect(),
    };
    serde_json::to_writer(BufWriter::new(out), &sidecar)?;
    Ok(())
}

pub fn read_params_sidecar(input: impl Read) -> Result<ParamsSidecar, MeshError> {
    let sidecar: ParamsSidecar = serde_json::from_reader(input)?;
    if sidecar.format_version != SIDECAR_VERSION {
        return Err(MeshError::Corrupt(format!("unsupported sidecar version {}", sidecar.format_version)));
    }
    if sidecar.theta_deg.len() != sidecar.h_mm.len() {
        return Err(MeshError::Corrupt("theta and h arrays differ in length".into()));
    }
    Ok(sidecar)
}
