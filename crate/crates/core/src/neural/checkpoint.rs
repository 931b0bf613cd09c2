use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{NetConfig, NetworkParams};
use super::tensor::Tensor;
use super::NeuralError;

pub const CHECKPOINT_FORMAT: &str = "scalper-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    seed: u64,
    n_price: usize,
    n_qty: usize,
    network: NetConfig,
    config: serde_json::Value,
    tensors: Vec<TensorRecord>,
}

/// Trained parameters plus the seed and an echo of the configuration that produced them.
///
/// Serialized as a single-line JSON document. Floats use the shortest round-trip
/// representation, so equal inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config: serde_json::Value,
    pub params: NetworkParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, NeuralError> {
        let container = Container {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            n_price: self.params.n_price(),
            n_qty: self.params.n_qty(),
            network: self.params.config(),
            config: self.config.clone(),
            tensors: self
                .params
                .tensors()
                .into_iter()
                .map(|(name, t)| TensorRecord {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&container)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let c: Container = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!("unknown format `{}`", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        let mut params = NetworkParams::zeros(&c.network, c.n_price, c.n_qty);
        let slots = params.tensors_mut();
        if slots.len() != c.tensors.len() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                c.tensors.len()
            )));
        }
        for ((name, slot), rec) in slots.into_iter().zip(c.tensors) {
            if rec.name != name {
                return Err(NeuralError::Checkpoint(format!(
                    "expected tensor `{name}`, found `{}`",
                    rec.name
                )));
            }
            let t = Tensor::from_vec(&rec.shape, rec.values)?;
            if t.shape() != slot.shape() {
                return Err(NeuralError::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(NeuralError::Checkpoint(format!("{name} has non-finite values")));
            }
            *slot = t;
        }
        Ok(Self {
            seed: c.seed,
            config: c.config,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = NetConfig { macro_hidden: 6, macro_embed: 5, lstm_hidden: 4, head_hidden: 7 };
        let ck = Checkpoint {
            seed: 8,
            config: serde_json::json!({"gamma": 0.9}),
            params: NetworkParams::new(&cfg, 5, 11, &mut rng),
        };
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(Checkpoint::from_json("{\"format\":\"other\"}").is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ck = Checkpoint {
            seed: 1,
            config: serde_json::Value::Null,
            params: NetworkParams::new(&NetConfig::default(), 5, 11, &mut rng),
        };
        let text = ck.to_json().unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(Checkpoint::from_json(&text), Err(NeuralError::Checkpoint(_))));
    }
}
