use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MlError, TrainedModel};

/// Format tag written into every model file.
pub const MODEL_FORMAT: &str = "misinfo-model/1";

impl TrainedModel {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), MlError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, MlError> {
        let model: TrainedModel = serde_json::from_reader(reader)?;
        if model.format != MODEL_FORMAT {
            return Err(MlError::Format(format!("unsupported model format {:?}", model.format)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), MlError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MlError> {
        Self::read_json(BufReader::new(File::open(path)?))
    }
}
