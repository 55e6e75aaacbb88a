//! Little-endian model checkpoint.
//!
//! ```text
//! magic        4 bytes  "LBCM"
//! version      u16      1
//! input_dim    u32
//! n_hidden     u32
//! widths       u32 × n_hidden
//! heads        u32
//! activation   u8       0 = relu, 1 = tanh
//! init_seed    u64
//! step         u64
//! layers       per layer: weights (fan_in × fan_out, row-major) f64, bias f64
//! has_adam     u8
//! adam         if has_adam: lr, beta1, beta2, epsilon f64, then first and
//!              second moments laid out like `layers`
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{Activation, Adam, AdamConfig, Dense, Gradients, Model, NetworkSpec};
use crate::error::{format_err, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LBCM";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A model with optional optimizer state, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<Adam>,
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| format_err!("dimension {v} does not fit in u32"))?;
    w.write_u32::<LE>(v)?;
    Ok(())
}

fn write_layers<W: Write>(w: &mut W, layers: &[Dense]) -> Result<()> {
    for layer in layers {
        for &v in layer.weights.iter().chain(layer.bias.iter()) {
            w.write_f64::<LE>(v)?;
        }
    }
    Ok(())
}

fn read_layers<R: Read>(r: &mut R, spec: &NetworkSpec) -> Result<Vec<Dense>> {
    spec.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let mut w = vec![0.0; fan_in * fan_out];
            r.read_f64_into::<LE>(&mut w)?;
            let mut b = vec![0.0; fan_out];
            r.read_f64_into::<LE>(&mut b)?;
            let weights = Array2::from_shape_vec((fan_in, fan_out), w).map_err(|e| format_err!("{e}"))?;
            Ok(Dense { weights, bias: Array1::from(b) })
        })
        .collect()
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &Model, adam: Option<&Adam>) -> Result<()> {
    let spec = model.spec();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u16::<LE>(CHECKPOINT_VERSION)?;
    write_u32(w, spec.input_dim)?;
    write_u32(w, spec.hidden_layers.len())?;
    for &h in &spec.hidden_layers {
        write_u32(w, h)?;
    }
    write_u32(w, spec.output_heads)?;
    w.write_u8(spec.activation.code())?;
    w.write_u64::<LE>(spec.init_seed)?;
    w.write_u64::<LE>(model.step)?;
    write_layers(w, &model.layers)?;
    match adam {
        None => w.write_u8(0)?,
        Some(adam) => {
            w.write_u8(1)?;
            let c = adam.config;
            for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                w.write_f64::<LE>(v)?;
            }
            write_layers(w, &adam.first_moment.layers)?;
            write_layers(w, &adam.second_moment.layers)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format_err!("not a model checkpoint (bad magic {magic:?})"));
    }
    let version = r.read_u16::<LE>()?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err!("unsupported checkpoint version {version}"));
    }
    let input_dim = r.read_u32::<LE>()? as usize;
    let n_hidden = r.read_u32::<LE>()? as usize;
    let hidden_layers = (0..n_hidden).map(|_| r.read_u32::<LE>().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let output_heads = r.read_u32::<LE>()? as usize;
    let activation = Activation::from_code(r.read_u8()?)?;
    let init_seed = r.read_u64::<LE>()?;
    let step = r.read_u64::<LE>()?;
    let spec = NetworkSpec { input_dim, hidden_layers, output_heads, activation, init_seed };
    spec.validate().map_err(|e| format_err!("invalid network spec in checkpoint: {e}"))?;
    let layers = read_layers(r, &spec)?;
    let model = Model::from_parts(spec.clone(), layers, step)?;
    let adam = match r.read_u8()? {
        0 => None,
        1 => {
            let mut c = [0.0; 4];
            r.read_f64_into::<LE>(&mut c)?;
            let config = AdamConfig { learning_rate: c[0], beta1: c[1], beta2: c[2], epsilon: c[3] };
            let first_moment = Gradients { layers: read_layers(r, &spec)? };
            let second_moment = Gradients { layers: read_layers(r, &spec)? };
            Some(Adam { config, first_moment, second_moment })
        }
        f => return Err(format_err!("invalid optimizer flag {f}")),
    };
    Ok(Checkpoint { model, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec { input_dim: 5, hidden_layers: vec![4, 3], output_heads: 6, activation: Activation::Tanh, init_seed: 12 };
        let mut model = Model::new(spec.clone()).unwrap();
        let mut adam = Adam::new(AdamConfig::with_learning_rate(3e-3), &spec).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) * 0.37);
        let g = model.gradients(x.view(), Array2::from_elem((4, 6), 0.1).view()).unwrap();
        adam.step(&mut model, &g).unwrap();

        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, Some(&adam)).unwrap();
        let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.adam.as_ref(), Some(&adam));
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back.model, back.adam.as_ref()).unwrap();
        assert_eq!(bytes, again);

        let mut plain = Vec::new();
        write_checkpoint(&mut plain, &model, None).unwrap();
        assert!(read_checkpoint(&mut plain.as_slice()).unwrap().adam.is_none());
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(matches!(read_checkpoint(&mut &b"XXXX\x01\x00"[..]), Err(crate::Error::Format(_))));
        let spec = NetworkSpec { input_dim: 2, hidden_layers: vec![], output_heads: 1, activation: Activation::Relu, init_seed: 0 };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &Model::new(spec).unwrap(), None).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(&mut bytes.as_slice()).is_err());
    }
}
