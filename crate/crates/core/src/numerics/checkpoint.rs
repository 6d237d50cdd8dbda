//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "NRCK" | version u32 | count u32
//! count x { name_len u32 | name utf-8 | rank u32 | extents u64 x rank | values f64 x prod(extents) }
//! has_adam u8
//! if has_adam: lr f64 | beta1 f64 | beta2 f64 | eps f64 | step u64 | per parameter: m f64 x n, v f64 x n
//! ```

use std::io::{Read, Write};

use super::adam::{AdamConfig, AdamState};
use super::graph::ParamStore;
use super::tensor::Tensor;
use super::NumericsError;

const MAGIC: &[u8; 4] = b"NRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N], NumericsError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| NumericsError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn get_u32(r: &mut impl Read) -> Result<u32, NumericsError> {
    Ok(u32::from_le_bytes(get::<4>(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64, NumericsError> {
    Ok(u64::from_le_bytes(get::<8>(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64, NumericsError> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, NumericsError> {
    (0..n).map(|_| get_f64(r)).collect()
}

pub fn write_checkpoint(w: &mut impl Write, params: &ParamStore, adam: Option<&AdamState>) -> Result<(), NumericsError> {
    w.write_all(MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, params.len() as u32)?;
    for (_, p) in params.iter() {
        put_u32(w, p.name.len() as u32)?;
        w.write_all(p.name.as_bytes())?;
        put_u32(w, p.value.rank() as u32)?;
        for &e in p.value.shape() {
            put_u64(w, e as u64)?;
        }
        put_f64s(w, p.value.data())?;
    }
    match adam {
        None => w.write_all(&[0])?,
        Some(state) => {
            w.write_all(&[1])?;
            let c = state.config;
            put_f64s(w, &[c.learning_rate, c.beta1, c.beta2, c.eps])?;
            put_u64(w, state.step)?;
            for (m, v) in state.m.iter().zip(&state.v) {
                put_f64s(w, m.data())?;
                put_f64s(w, v.data())?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(ParamStore, Option<AdamState>), NumericsError> {
    if &get::<4>(r)? != MAGIC {
        return Err(NumericsError::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NumericsError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = get_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
        let name = String::from_utf8(name).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
        let rank = get_u32(r)? as usize;
        let shape = (0..rank).map(|_| get_u64(r).map(|e| e as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().product();
        params.add(name, Tensor::new(shape, get_f64s(r, n)?)?);
    }
    let adam = match get::<1>(r)?[0] {
        0 => None,
        1 => {
            let config = AdamConfig { learning_rate: get_f64(r)?, beta1: get_f64(r)?, beta2: get_f64(r)?, eps: get_f64(r)? };
            let step = get_u64(r)?;
            let mut m = Vec::with_capacity(count);
            let mut v = Vec::with_capacity(count);
            for (_, p) in params.iter() {
                let shape = p.value.shape().to_vec();
                m.push(Tensor::new(shape.clone(), get_f64s(r, p.value.len())?)?);
                v.push(Tensor::new(shape, get_f64s(r, p.value.len())?)?);
            }
            Some(AdamState { config, step, m, v })
        }
        flag => return Err(NumericsError::Checkpoint(format!("bad optimizer flag {flag}"))),
    };
    Ok((params, adam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Gradients;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(values in prop::collection::vec(-1e6f64..1e6, 1..40), rows in 1usize..4) {
            let cols = values.len().div_ceil(rows);
            let mut padded = values.clone();
            padded.resize(rows * cols, 0.25);
            let mut store = ParamStore::new();
            let a = store.add("embed.word", Tensor::matrix(rows, cols, padded).unwrap());
            store.add("b", Tensor::vector(values));
            let mut adam = AdamState::new(AdamConfig::default(), &store);
            let mut grads = Gradients::zeros_like(&store);
            grads.get_mut(a).data_mut()[0] = 1.0;
            adam.step(&mut store, &grads);

            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &store, Some(&adam)).unwrap();
            let (loaded, loaded_adam) = read_checkpoint(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(&loaded, &store);
            prop_assert_eq!(loaded_adam.unwrap(), adam);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&mut &b"XXXX"[..]).is_err());
        let mut buf = Vec::new();
        let mut store = ParamStore::new();
        store.add("p", Tensor::vector(vec![1.0, 2.0]));
        write_checkpoint(&mut buf, &store, None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
