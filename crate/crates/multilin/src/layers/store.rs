//! Layer serialization: a directory of DTF1 files, one per factor, core,
//! weight, or bias, plus a JSON manifest naming each part and its role.
//! Loading restores the layer bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dtf;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

use super::{FcLayer, TclLayer, TrlLayer};

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layer: String,
    parts: Vec<Part>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Part {
    role: String,
    file: String,
}

fn write_parts(dir: &Path, layer: &str, parts: &[(String, &DenseTensor)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        layer: layer.to_string(),
        parts: Vec::new(),
    };
    for (role, tensor) in parts {
        let file = format!("{role}.dtf1");
        dtf::write_file(dir.join(&file), tensor)?;
        manifest.parts.push(Part {
            role: role.clone(),
            file,
        });
    }
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn read_manifest(dir: &Path, expected_layer: &str) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.layer != expected_layer {
        return Err(Error::Format(format!(
            "manifest describes a '{}' layer, expected '{expected_layer}'",
            manifest.layer
        )));
    }
    Ok(manifest)
}

fn read_part(dir: &Path, manifest: &Manifest, role: &str) -> Result<DenseTensor> {
    let part = manifest
        .parts
        .iter()
        .find(|p| p.role == role)
        .ok_or_else(|| Error::Format(format!("manifest missing part '{role}'")))?;
    dtf::read_file(dir.join(&part.file))
}

fn bias_tensor(bias: &[f64]) -> DenseTensor {
    DenseTensor::new(vec![bias.len()], bias.to_vec()).expect("bias tensor")
}

pub fn save_tcl(dir: impl AsRef<Path>, layer: &TclLayer) -> Result<()> {
    let parts: Vec<(String, &DenseTensor)> = layer
        .factors()
        .iter()
        .enumerate()
        .map(|(k, f)| (format!("contraction_factor_{k}"), f.as_tensor()))
        .collect();
    write_parts(dir.as_ref(), "tcl", &parts)
}

pub fn load_tcl(dir: impl AsRef<Path>) -> Result<TclLayer> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir, "tcl")?;
    let mut factors = Vec::new();
    for k in 0..manifest.parts.len() {
        let t = read_part(dir, &manifest, &format!("contraction_factor_{k}"))?;
        factors.push(Matrix::from_tensor(t)?);
    }
    TclLayer::new(factors)
}

pub fn save_trl(dir: impl AsRef<Path>, layer: &TrlLayer) -> Result<()> {
    let bias = bias_tensor(layer.bias());
    let mut parts: Vec<(String, &DenseTensor)> = vec![("core".to_string(), layer.core())];
    for (k, f) in layer.input_factors().iter().enumerate() {
        parts.push((format!("input_factor_{k}"), f.as_tensor()));
    }
    parts.push(("output_factor".to_string(), layer.output_factor().as_tensor()));
    parts.push(("bias".to_string(), &bias));
    write_parts(dir.as_ref(), "trl", &parts)
}

pub fn load_trl(dir: impl AsRef<Path>) -> Result<TrlLayer> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir, "trl")?;
    let core = read_part(dir, &manifest, "core")?;
    let n_in = core.order() - 1;
    let mut input_factors = Vec::with_capacity(n_in);
    for k in 0..n_in {
        let t = read_part(dir, &manifest, &format!("input_factor_{k}"))?;
        input_factors.push(Matrix::from_tensor(t)?);
    }
    let output_factor = Matrix::from_tensor(read_part(dir, &manifest, "output_factor")?)?;
    let bias = read_part(dir, &manifest, "bias")?;
    TrlLayer::new(core, input_factors, output_factor, bias.data().to_vec())
}

pub fn save_fc(dir: impl AsRef<Path>, layer: &FcLayer) -> Result<()> {
    let bias = bias_tensor(layer.bias());
    let parts: Vec<(String, &DenseTensor)> = vec![
        ("weight".to_string(), layer.weight().as_tensor()),
        ("bias".to_string(), &bias),
    ];
    write_parts(dir.as_ref(), "fc", &parts)
}

pub fn load_fc(dir: impl AsRef<Path>) -> Result<FcLayer> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir, "fc")?;
    let weight = Matrix::from_tensor(read_part(dir, &manifest, "weight")?)?;
    let bias = read_part(dir, &manifest, "bias")?;
    FcLayer::new(weight, bias.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(a: &[f64]) -> Vec<u64> {
        a.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn tcl_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = TclLayer::random(&[4, 3], &[2, 2], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_tcl(dir.path(), &layer).unwrap();
        let back = load_tcl(dir.path()).unwrap();
        for (a, b) in layer.factors().iter().zip(back.factors()) {
            assert_eq!(bits(a.data()), bits(b.data()));
        }
    }

    #[test]
    fn trl_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = TrlLayer::random(&[4, 3], &[2, 2, 3], 5, &mut rng).unwrap();
        layer.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3, -0.0, 5e-320]);
        let dir = tempfile::tempdir().unwrap();
        save_trl(dir.path(), &layer).unwrap();
        let back = load_trl(dir.path()).unwrap();
        assert_eq!(bits(layer.core().data()), bits(back.core().data()));
        assert_eq!(bits(layer.bias()), bits(back.bias()));
        assert_eq!(
            bits(layer.output_factor().data()),
            bits(back.output_factor().data())
        );
        for (a, b) in layer.input_factors().iter().zip(back.input_factors()) {
            assert_eq!(bits(a.data()), bits(b.data()));
        }
    }

    #[test]
    fn fc_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = FcLayer::random(6, 2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        save_fc(dir.path(), &layer).unwrap();
        let back = load_fc(dir.path()).unwrap();
        assert_eq!(bits(layer.weight().data()), bits(back.weight().data()));
        assert_eq!(bits(layer.bias()), bits(back.bias()));
    }

    #[test]
    fn load_rejects_wrong_layer_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = FcLayer::random(3, 2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        save_fc(dir.path(), &layer).unwrap();
        assert!(load_trl(dir.path()).is_err());
    }
}
