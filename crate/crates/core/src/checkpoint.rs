//! Flat binary checkpoint of named arrays.
//!
//! Layout: magic `MSFW`, `u32` array count, then per array a `u16` name
//! length, the name bytes, `u8` ndim, `u32` dims, and little-endian `f32`
//! data. Model checkpoints store the learnable weights plus enough
//! hyperparameters to rebuild the model; weights round-trip at `f32`
//! precision.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use super::msf::{ModelVariant, MsfHyper, MsfModel, MsfParams};

const MAGIC: &[u8; 4] = b"MSFW";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic, expected MSFW")]
    BadMagic,
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("array name is not valid utf-8")]
    BadName,
    #[error("checkpoint is missing array {0:?}")]
    MissingArray(String),
    #[error("array {name:?} has shape {got:?}, expected {expected:?}")]
    BadShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid model checkpoint: {0}")]
    BadModel(String),
}

pub fn named_arrays_to_bytes(arrays: &[(&str, &ArrayD<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, array) in arrays {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(array.ndim() as u8);
        for &dim in array.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in array.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_named_arrays(bytes: &[u8]) -> Result<Vec<(String, ArrayD<f64>)>, CheckpointError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *pos + n > bytes.len() {
            return Err(CheckpointError::Truncated(format!(
                "need {n} bytes at offset {pos}, file has {}",
                bytes.len()
            )));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let v = f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
            data.push(v as f64);
        }
        let array = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| CheckpointError::Truncated(e.to_string()))?;
        arrays.push((name, array));
    }
    Ok(arrays)
}

pub fn write_named_arrays(
    path: &Path,
    arrays: &[(&str, &ArrayD<f64>)],
) -> Result<(), CheckpointError> {
    std::fs::write(path, named_arrays_to_bytes(arrays))?;
    Ok(())
}

pub fn load_named_arrays(path: &Path) -> Result<Vec<(String, ArrayD<f64>)>, CheckpointError> {
    read_named_arrays(&std::fs::read(path)?)
}

fn scalar(v: f64) -> ArrayD<f64> {
    ArrayD::from_elem(IxDyn(&[1]), v)
}

/// Serializes the model: weights in their fixed order followed by the
/// hyperparameters the weight shapes do not already carry.
pub fn model_to_bytes(model: &MsfModel) -> Vec<u8> {
    let h = &model.hyper;
    let hyper_arrays: Vec<(&str, ArrayD<f64>)> = vec![
        ("hyper_t_sim", scalar(h.t_sim as f64)),
        ("hyper_alpha", scalar(h.alpha)),
        ("hyper_sigma", scalar(h.sigma)),
        ("hyper_tau", scalar(h.tau)),
        ("hyper_v_th", scalar(h.v_th)),
        ("hyper_beta", scalar(h.beta)),
        (
            "hyper_dilations",
            ArrayD::from_shape_vec(
                IxDyn(&[3]),
                h.dilations.iter().map(|&d| d as f64).collect(),
            )
            .unwrap(),
        ),
        (
            "variant",
            ArrayD::from_shape_vec(
                IxDyn(&[3]),
                vec![
                    model.variant.lsf as u8 as f64,
                    model.variant.gsf as u8 as f64,
                    model.variant.tim as u8 as f64,
                ],
            )
            .unwrap(),
        ),
    ];
    let mut arrays: Vec<(&str, &ArrayD<f64>)> = model.params.named();
    for (name, arr) in &hyper_arrays {
        arrays.push((name, arr));
    }
    named_arrays_to_bytes(&arrays)
}

pub fn save_model(path: &Path, model: &MsfModel) -> Result<(), CheckpointError> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MsfModel, CheckpointError> {
    let arrays = read_named_arrays(bytes)?;
    let find = |name: &str| -> Result<&ArrayD<f64>, CheckpointError> {
        arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| CheckpointError::MissingArray(name.to_string()))
    };
    let get_scalar = |name: &str| -> Result<f64, CheckpointError> {
        let a = find(name)?;
        a.first()
            .copied()
            .ok_or_else(|| CheckpointError::BadModel(format!("{name} is empty")))
    };

    let p1 = find("lsf_kernel_p1")?.clone();
    if p1.ndim() != 3 {
        return Err(CheckpointError::BadModel(
            "lsf_kernel_p1 must be 3-dimensional".into(),
        ));
    }
    let d = p1.shape()[1];
    let omega = p1.shape()[2];
    let tim_kernel = find("tim_kernel")?.clone();
    let omega_tim = if tim_kernel.ndim() == 2 {
        tim_kernel.shape()[1]
    } else {
        return Err(CheckpointError::BadModel(
            "tim_kernel must be 2-dimensional".into(),
        ));
    };
    let dil = find("hyper_dilations")?;
    if dil.len() != 3 {
        return Err(CheckpointError::BadModel(
            "hyper_dilations must have 3 entries".into(),
        ));
    }
    let dilations = [
        dil[[0]].round() as usize,
        dil[[1]].round() as usize,
        dil[[2]].round() as usize,
    ];
    let variant_arr = find("variant")?;
    if variant_arr.len() != 3 {
        return Err(CheckpointError::BadModel("variant must have 3 entries".into()));
    }
    let variant = ModelVariant {
        lsf: variant_arr[[0]] != 0.0,
        gsf: variant_arr[[1]] != 0.0,
        tim: variant_arr[[2]] != 0.0,
    };
    let hyper = MsfHyper {
        d,
        t_sim: get_scalar("hyper_t_sim")?.round() as usize,
        omega,
        dilations,
        omega_tim,
        alpha: get_scalar("hyper_alpha")?,
        sigma: get_scalar("hyper_sigma")?,
        tau: get_scalar("hyper_tau")?,
        v_th: get_scalar("hyper_v_th")?,
        beta: get_scalar("hyper_beta")?,
    };
    hyper
        .validate()
        .map_err(|e| CheckpointError::BadModel(e.to_string()))?;

    let quarter = d / 4;
    let expect_shape =
        |name: &str, expected: &[usize]| -> Result<ArrayD<f64>, CheckpointError> {
            let a = find(name)?;
            if a.shape() != expected {
                return Err(CheckpointError::BadShape {
                    name: name.to_string(),
                    expected: expected.to_vec(),
                    got: a.shape().to_vec(),
                });
            }
            Ok(a.clone())
        };
    let params = MsfParams {
        lsf_kernels: [
            expect_shape("lsf_kernel_p1", &[quarter, d, omega])?,
            expect_shape("lsf_kernel_p2", &[quarter, d, omega])?,
            expect_shape("lsf_kernel_p3", &[quarter, d, omega])?,
        ],
        gsf_reduce: expect_shape("gsf_reduce", &[quarter, d])?,
        gsf_w: expect_shape("gsf_w", &[quarter, quarter])?,
        tim_kernel: expect_shape("tim_kernel", &[d, omega_tim])?,
        scorer_w: expect_shape("scorer_w", &[d])?,
        scorer_b: expect_shape("scorer_b", &[1])?,
    };
    Ok(MsfModel {
        hyper,
        variant,
        params,
    })
}

pub fn load_model(path: &Path) -> Result<MsfModel, CheckpointError> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn named_arrays_round_trip_at_f32_precision() {
        let a = ArrayD::from_shape_fn(IxDyn(&[2, 3]), |ix| (ix[0] * 3 + ix[1]) as f64 * 0.25);
        let b = ArrayD::from_elem(IxDyn(&[4]), -1.5);
        let bytes = named_arrays_to_bytes(&[("alpha", &a), ("beta", &b)]);
        let back = read_named_arrays(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "alpha");
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let a = ArrayD::from_elem(IxDyn(&[2]), 1.0);
        let bytes = named_arrays_to_bytes(&[("x", &a)]);
        assert!(matches!(
            read_named_arrays(&bytes[..bytes.len() - 2]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_named_arrays(&bad),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn model_round_trips_through_bytes() {
        let model = MsfModel::init(MsfHyper::default(), ModelVariant::full(), 99).unwrap();
        let bytes = model_to_bytes(&model);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.hyper.d, model.hyper.d);
        assert_eq!(back.hyper.t_sim, model.hyper.t_sim);
        assert_eq!(back.hyper.dilations, model.hyper.dilations);
        // Scalar hyperparameters live at f32 resolution on disk.
        assert_eq!(back.hyper.alpha as f32, model.hyper.alpha as f32);
        assert_eq!(back.hyper.tau as f32, model.hyper.tau as f32);
        assert_eq!(back.variant, model.variant);
        // Weights survive the f32 round trip within f32 resolution.
        for ((_, a), (_, b)) in model.params.named().iter().zip(back.params.named()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= (*x as f32).abs() as f64 * 1e-7 + 1e-10);
            }
        }
        // Serialization is deterministic.
        assert_eq!(bytes, model_to_bytes(&model));
    }

    #[test]
    fn missing_arrays_are_reported_by_name() {
        let a = ArrayD::from_elem(IxDyn(&[1]), 1.0);
        let bytes = named_arrays_to_bytes(&[("nothing", &a)]);
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(CheckpointError::MissingArray(name)) if name == "lsf_kernel_p1"
        ));
    }
}
