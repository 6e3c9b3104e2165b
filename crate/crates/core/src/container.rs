//! The "F4D v1" on-disk container: a directory with `manifest.json` and one
//! little-endian, C-order `.raw` payload per array.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::{Grid4D, VelocityField4D};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    C64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::C64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    C64(ArrayD<Complex32>),
    U8(ArrayD<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::F32(_) => DType::F32,
            ArrayData::F64(_) => DType::F64,
            ArrayData::C64(_) => DType::C64,
            ArrayData::U8(_) => DType::U8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F32(a) => a.shape(),
            ArrayData::F64(a) => a.shape(),
            ArrayData::C64(a) => a.shape(),
            ArrayData::U8(a) => a.shape(),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let n: usize = self.shape().iter().product();
        let mut out = Vec::with_capacity(n * self.dtype().size());
        // `iter()` walks logical C order regardless of memory layout
        match self {
            ArrayData::F32(a) => a
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::F64(a) => a
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ArrayData::C64(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
            ArrayData::U8(a) => out.extend(a.iter().copied()),
        }
        out
    }

    fn from_bytes(dtype: DType, shape: &[usize], bytes: &[u8]) -> Option<ArrayData> {
        let dim = IxDyn(shape);
        let f32_at = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        Some(match dtype {
            DType::F32 => ArrayData::F32(
                ArrayD::from_shape_vec(dim, bytes.chunks_exact(4).map(f32_at).collect()).ok()?,
            ),
            DType::F64 => ArrayData::F64(
                ArrayD::from_shape_vec(
                    dim,
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
                .ok()?,
            ),
            DType::C64 => ArrayData::C64(
                ArrayD::from_shape_vec(
                    dim,
                    bytes
                        .chunks_exact(8)
                        .map(|c| Complex32::new(f32_at(&c[..4]), f32_at(&c[4..])))
                        .collect(),
                )
                .ok()?,
            ),
            DType::U8 => ArrayData::U8(ArrayD::from_shape_vec(dim, bytes.to_vec()).ok()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    order: String,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    arrays: Vec<ArrayEntry>,
    #[serde(default)]
    metadata: Map<String, Value>,
}

/// Named arrays plus free-form JSON metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub arrays: Vec<(String, ArrayData)>,
    pub metadata: Map<String, Value>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, data: ArrayData) -> &mut Self {
        self.arrays.push((name.into(), data));
        self
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) -> Result<&mut Self> {
        self.metadata
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }

    pub fn meta<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .metadata
            .get(key)
            .ok_or_else(|| Error::MissingArray(format!("metadata `{key}`")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn get(&self, name: &str) -> Result<&ArrayData> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::MissingArray(name.to_string()))
    }

    pub fn f32(&self, name: &str) -> Result<&ArrayD<f32>> {
        match self.get(name)? {
            ArrayData::F32(a) => Ok(a),
            other => Err(dtype_err(name, DType::F32, other.dtype())),
        }
    }

    pub fn f64(&self, name: &str) -> Result<&ArrayD<f64>> {
        match self.get(name)? {
            ArrayData::F64(a) => Ok(a),
            other => Err(dtype_err(name, DType::F64, other.dtype())),
        }
    }

    pub fn c64(&self, name: &str) -> Result<&ArrayD<Complex32>> {
        match self.get(name)? {
            ArrayData::C64(a) => Ok(a),
            other => Err(dtype_err(name, DType::C64, other.dtype())),
        }
    }

    pub fn u8(&self, name: &str) -> Result<&ArrayD<u8>> {
        match self.get(name)? {
            ArrayData::U8(a) => Ok(a),
            other => Err(dtype_err(name, DType::U8, other.dtype())),
        }
    }
}

fn dtype_err(name: &str, want: DType, got: DType) -> Error {
    Error::ShapeMismatch(format!(
        "array `{name}` has dtype {got:?}, expected {want:?}"
    ))
}

fn container_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Container {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !name.starts_with('.')
}

pub fn save_container(path: impl AsRef<Path>, container: &Container) -> Result<()> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    for (name, _) in &container.arrays {
        if !valid_name(name) {
            return Err(container_err(path, format!("invalid array name `{name}`")));
        }
        if !seen.insert(name.as_str()) {
            return Err(container_err(
                path,
                format!("duplicate array name `{name}`"),
            ));
        }
    }
    fs::create_dir_all(path)?;
    let mut entries = Vec::with_capacity(container.arrays.len());
    for (name, data) in &container.arrays {
        let file = format!("{name}.raw");
        fs::write(path.join(&file), data.to_bytes())?;
        entries.push(ArrayEntry {
            name: name.clone(),
            dtype: data.dtype(),
            shape: data.shape().to_vec(),
            order: "C".into(),
            file,
        });
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        arrays: entries,
        metadata: container.metadata.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path.join(MANIFEST), text)?;
    Ok(())
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let manifest_path: PathBuf = path.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| container_err(path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| container_err(path, format!("corrupt manifest: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(container_err(
            path,
            format!("unsupported version {}", manifest.version),
        ));
    }
    let mut out = Container {
        arrays: Vec::with_capacity(manifest.arrays.len()),
        metadata: manifest.metadata,
    };
    for entry in manifest.arrays {
        if entry.order != "C" {
            return Err(container_err(
                path,
                format!("unsupported order `{}`", entry.order),
            ));
        }
        if entry.file.contains('/') || entry.file.contains('\\') || entry.file.starts_with('.') {
            return Err(container_err(
                path,
                format!("invalid payload file `{}`", entry.file),
            ));
        }
        let bytes = fs::read(path.join(&entry.file))
            .map_err(|e| container_err(path, format!("missing payload `{}`: {e}", entry.file)))?;
        let n: usize = entry.shape.iter().product();
        let expect = n * entry.dtype.size();
        if bytes.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "array `{}`: shape {:?} needs {expect} bytes, payload has {}",
                entry.name,
                entry.shape,
                bytes.len()
            )));
        }
        let data = ArrayData::from_bytes(entry.dtype, &entry.shape, &bytes)
            .ok_or_else(|| container_err(path, format!("cannot decode `{}`", entry.name)))?;
        out.arrays.push((entry.name, data));
    }
    Ok(out)
}

pub fn mask_to_u8(mask: &ndarray::Array3<bool>) -> ArrayD<u8> {
    mask.mapv(u8::from).into_dyn()
}

/// Encode a velocity field as arrays `v`, `magnitude`, `fluid_mask` plus `grid` metadata.
pub fn field_to_container(field: &VelocityField4D) -> Result<Container> {
    let mut c = Container::new();
    c.push("v", ArrayData::F32(field.v.clone().into_dyn()))
        .push(
            "magnitude",
            ArrayData::F32(field.magnitude.clone().into_dyn()),
        )
        .push("fluid_mask", ArrayData::U8(mask_to_u8(&field.fluid_mask)));
    c.set_meta("grid", field.grid)?;
    Ok(c)
}

pub fn field_from_container(c: &Container) -> Result<VelocityField4D> {
    let grid: Grid4D = c.meta("grid")?;
    let v = c
        .f32("v")?
        .clone()
        .into_dimensionality()
        .map_err(|e| Error::ShapeMismatch(format!("v: {e}")))?;
    let magnitude = c
        .f32("magnitude")?
        .clone()
        .into_dimensionality()
        .map_err(|e| Error::ShapeMismatch(format!("magnitude: {e}")))?;
    let fluid_mask = c
        .u8("fluid_mask")?
        .mapv(|b| b != 0)
        .into_dimensionality()
        .map_err(|e| Error::ShapeMismatch(format!("fluid_mask: {e}")))?;
    VelocityField4D::new(grid, v, magnitude, fluid_mask)
}

pub fn save_field(
    path: impl AsRef<Path>,
    field: &VelocityField4D,
    extra: &Map<String, Value>,
) -> Result<()> {
    let mut c = field_to_container(field)?;
    for (k, v) in extra {
        c.metadata.insert(k.clone(), v.clone());
    }
    save_container(path, &c)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<VelocityField4D> {
    field_from_container(&load_container(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid4D;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn sample_field() -> VelocityField4D {
        let g = Grid4D::new(3, 4, 2, 5, 2.0, 20.0).unwrap();
        let mut f = VelocityField4D::zeros(g);
        for (i, v) in f.v.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin() * 1e-3 + f32::EPSILON * i as f32;
        }
        for (i, m) in f.magnitude.iter_mut().enumerate() {
            *m = i as f32 / 7.0;
        }
        f.fluid_mask[[1, 2, 0]] = true;
        f.fluid_mask[[2, 3, 1]] = true;
        f
    }

    #[test]
    fn velocity_field_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample_field();
        save_field(dir.path().join("f"), &f, &Map::new()).unwrap();
        let back = load_field(dir.path().join("f")).unwrap();
        assert_eq!(back.grid, f.grid);
        assert!(back
            .v
            .iter()
            .zip(f.v.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, f);
    }

    #[test]
    fn empty_container_writes_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_container(dir.path(), &Container::new()).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["arrays"].as_array().unwrap().len(), 0);
        assert!(load_container(dir.path()).unwrap().arrays.is_empty());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Container::new();
        c.push("a", ArrayData::F32(Array1::<f32>::zeros(6).into_dyn()));
        save_container(dir.path(), &c).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        fs::write(dir.path().join(MANIFEST), text.replace("6", "7")).unwrap();
        assert!(matches!(
            load_container(dir.path()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn missing_and_corrupt_inputs_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_container(dir.path().join("nope")),
            Err(Error::Container { .. })
        ));
        fs::write(dir.path().join(MANIFEST), "{not json").unwrap();
        assert!(matches!(
            load_container(dir.path()),
            Err(Error::Container { .. })
        ));

        let mut c = Container::new();
        c.push("a", ArrayData::U8(Array1::<u8>::zeros(2).into_dyn()));
        let d2 = dir.path().join("x");
        save_container(&d2, &c).unwrap();
        fs::remove_file(d2.join("a.raw")).unwrap();
        assert!(matches!(load_container(&d2), Err(Error::Container { .. })));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Container::new();
        c.push("a", ArrayData::U8(Array1::<u8>::zeros(2).into_dyn()));
        c.push("a", ArrayData::U8(Array1::<u8>::zeros(2).into_dyn()));
        assert!(save_container(dir.path(), &c).is_err());
    }

    #[test]
    fn payload_is_little_endian_c_order_interleaved() {
        let dir = tempfile::tempdir().unwrap();
        let a = Array2::from_shape_vec(
            (1, 2),
            vec![Complex32::new(1.0, 2.0), Complex32::new(3.0, 4.0)],
        )
        .unwrap();
        let mut c = Container::new();
        c.push("z", ArrayData::C64(a.into_dyn()));
        save_container(dir.path(), &c).unwrap();
        let bytes = fs::read(dir.path().join("z.raw")).unwrap();
        let vals: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn every_dtype_round_trips_bitwise(
            f in proptest::collection::vec(any::<f32>(), 1..20),
            d in proptest::collection::vec(any::<f64>(), 1..20),
            b in proptest::collection::vec(any::<u8>(), 1..20),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let cz: Vec<Complex32> = f.chunks(2).map(|p| Complex32::new(p[0], *p.last().unwrap())).collect();
            let mut c = Container::new();
            c.push("f", ArrayData::F32(Array1::from(f.clone()).into_dyn()))
                .push("d", ArrayData::F64(Array1::from(d.clone()).into_dyn()))
                .push("c", ArrayData::C64(Array1::from(cz.clone()).into_dyn()))
                .push("b", ArrayData::U8(Array1::from(b.clone()).into_dyn()));
            save_container(dir.path(), &c).unwrap();
            let back = load_container(dir.path()).unwrap();
            let bits32 = |v: &ArrayD<f32>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits32(back.f32("f").unwrap()), f.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.f64("d").unwrap().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                d.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.c64("c").unwrap().iter().map(|x| (x.re.to_bits(), x.im.to_bits())).collect::<Vec<_>>(),
                cz.iter().map(|x| (x.re.to_bits(), x.im.to_bits())).collect::<Vec<_>>());
            prop_assert_eq!(back.u8("b").unwrap().iter().copied().collect::<Vec<_>>(), b);
        }
    }
}
