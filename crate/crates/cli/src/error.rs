use std::fmt;
use std::path::Path;

use stentshape::dataset::DatasetError;
use stentshape::gcn::GcnError;
use stentshape::geometry::GeometryError;
use stentshape::mesh::MeshError;
use stentshape::pipeline::PipelineError;

pub const USAGE: u8 = 2;
pub const VALIDATION: u8 = 3;
pub const IO: u8 = 4;
pub const NUMERICAL: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: &str) -> Self {
        Self::new(USAGE, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(IO, format!("{}: {e}", path.display()))
    }

    pub fn context(self, path: &Path) -> Self {
        Self::new(self.code, format!("{}: {}", path.display(), self.message))
    }

    pub fn segment(self, id: &str) -> Self {
        Self::new(self.code, format!("segment {id}: {}", self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn geometry_code(e: &GeometryError) -> u8 {
    match e {
        GeometryError::InvalidProjection(_) | GeometryError::NonFinite(_) | GeometryError::CountMismatch { .. } => VALIDATION,
        _ => NUMERICAL,
    }
}

fn mesh_code(e: &MeshError) -> u8 {
    match e {
        MeshError::Io(_) => IO,
        MeshError::EmptyMesh => NUMERICAL,
        _ => VALIDATION,
    }
}

fn dataset_code(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io(_) => IO,
        DatasetError::Geometry(g) => geometry_code(g),
        DatasetError::Mesh(m) => mesh_code(m),
        _ => VALIDATION,
    }
}

fn gcn_code(e: &GcnError) -> u8 {
    match e {
        GcnError::Io(_) => IO,
        GcnError::NonFiniteLoss { .. } | GcnError::Graph(_) => NUMERICAL,
        _ => VALIDATION,
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::new(dataset_code(&e), e.to_string())
    }
}

impl From<GcnError> for CliError {
    fn from(e: GcnError) -> Self {
        Self::new(gcn_code(&e), e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self::new(geometry_code(&e), e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        Self::new(mesh_code(&e), e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e.root() {
            PipelineError::Dataset(d) => dataset_code(d),
            PipelineError::Gcn(g) => gcn_code(g),
            PipelineError::Geometry(g) => geometry_code(g),
            PipelineError::Mesh(m) => mesh_code(m),
            PipelineError::Segment { .. } => NUMERICAL,
        };
        Self::new(code, e.to_string())
    }
}
