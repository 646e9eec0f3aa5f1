//! Binary field files, CSV export and run configuration.
//!
//! Layout: magic `OBBQ1\0`, then `R: f64`, `n: u32`, component count `u32`,
//! staggering tag `u32` (0 cell centred, 1 MAC faces), then the payload as
//! little-endian `f64` in x-fastest order, one component after the other.
//! Writes go to a temporary sibling and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{len, Field, Grid, ScalarField, Stagger, VectorField};
use crate::heat::{HeatProfiles, QuadratureConfig};
use crate::initial_data::{HomogeneousData, TemperatureMode, VelocityMode};
use crate::real::{lit, Real};
use crate::solver::SolverConfig;
use crate::sweep::SweepConfig;
use crate::verify::VerifyConfig;

const MAGIC: &[u8; 6] = b"OBBQ1\0";
const HEADER: usize = 6 + 8 + 4 + 4 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Cell,
    Mac,
}

/// Contents of a field file in file precision.
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    pub half_width: f64,
    pub cells: usize,
    pub layout: Layout,
    pub components: Vec<Vec<f64>>,
}

/// A decoded field in working precision.
#[derive(Clone, Debug)]
pub enum FieldData<T> {
    Scalar(ScalarField<T>),
    Vector(VectorField<T>),
}

impl RawField {
    fn expected_len(&self, c: usize) -> usize {
        match self.layout {
            Layout::Cell => self.cells.pow(3),
            Layout::Mac => {
                let mut dims = [self.cells; 3];
                dims[c] += 1;
                dims.iter().product()
            }
        }
    }

    fn check(&self) -> Result<()> {
        let nc = self.components.len();
        if nc == 0 || (self.layout == Layout::Mac && nc != 3) {
            return Err(Error::Format(format!("{nc} components do not fit the {:?} layout", self.layout)));
        }
        for (c, v) in self.components.iter().enumerate() {
            if v.len() != self.expected_len(c) {
                return Err(Error::Format(format!("component {c} has {} values, expected {}", v.len(), self.expected_len(c))));
            }
        }
        Ok(())
    }

    pub fn from_scalar<T: Real>(f: &ScalarField<T>) -> Self {
        RawField::cell_bundle(f.grid(), &[f])
    }

    pub fn from_vector<T: Real>(v: &VectorField<T>) -> Self {
        let g = v.grid();
        RawField {
            half_width: to64(g.half_width()),
            cells: g.cells(),
            layout: Layout::Mac,
            components: v.components().iter().map(|c| c.iter().map(|&x| to64(x)).collect()).collect(),
        }
    }

    /// Several cell-centred scalars stored as the components of one file.
    pub fn cell_bundle<T: Real>(grid: &Grid<T>, fields: &[&ScalarField<T>]) -> Self {
        RawField {
            half_width: to64(grid.half_width()),
            cells: grid.cells(),
            layout: Layout::Cell,
            components: fields.iter().map(|f| f.values().iter().map(|&x| to64(x)).collect()).collect(),
        }
    }

    pub fn grid<T: Real>(&self) -> Result<Grid<T>> {
        Grid::new(lit(self.half_width), self.cells)
    }

    /// Decodes into a scalar (one cell component) or vector (MAC) field.
    pub fn into_field<T: Real>(self) -> Result<FieldData<T>> {
        let g = self.grid::<T>()?;
        let conv = |v: Vec<f64>| v.into_iter().map(lit::<T>).collect::<Vec<T>>();
        match (self.layout, self.components.len()) {
            (Layout::Cell, 1) => {
                let v = self.components.into_iter().next().expect("one component");
                Ok(FieldData::Scalar(ScalarField::from_values(&g, conv(v))?))
            }
            (Layout::Mac, 3) => {
                let mut it = self.components.into_iter();
                let comps = [0, 1, 2].map(|_| conv(it.next().expect("three components")));
                Ok(FieldData::Vector(VectorField::from_components(&g, comps)?))
            }
            (l, c) => Err(Error::Format(format!("a {l:?} file with {c} components is not a single field"))),
        }
    }

    /// Splits a cell bundle into scalar fields.
    pub fn into_scalars<T: Real>(self) -> Result<Vec<ScalarField<T>>> {
        if self.layout != Layout::Cell {
            return Err(Error::Format("expected cell-centred components".into()));
        }
        let g = self.grid::<T>()?;
        self.components.into_iter().map(|v| ScalarField::from_values(&g, v.into_iter().map(lit::<T>).collect())).collect()
    }
}

fn to64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn encode(f: &RawField) -> Result<Vec<u8>> {
    f.check()?;
    let total: usize = f.components.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(HEADER + 8 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&f.half_width.to_le_bytes());
    out.extend_from_slice(&(f.cells as u32).to_le_bytes());
    out.extend_from_slice(&(f.components.len() as u32).to_le_bytes());
    out.extend_from_slice(&(if f.layout == Layout::Cell { 0u32 } else { 1u32 }).to_le_bytes());
    for c in &f.components {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<RawField> {
    if bytes.len() < 6 {
        return Err(Error::Format("file shorter than the magic".into()));
    }
    if &bytes[..6] != MAGIC {
        if &bytes[..4] == b"OBBQ" && bytes[4].is_ascii_digit() {
            return Err(Error::Version(bytes[4] - b'0'));
        }
        return Err(Error::Format("bad magic".into()));
    }
    if bytes.len() < HEADER {
        return Err(Error::Format("truncated header".into()));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let half_width = f64_at(6);
    let cells = u32_at(14);
    let ncomp = u32_at(18);
    let layout = match u32_at(22) {
        0 => Layout::Cell,
        1 => Layout::Mac,
        t => return Err(Error::Format(format!("unknown staggering tag {t}"))),
    };
    let probe = RawField { half_width, cells, layout, components: vec![] };
    if Grid::<f64>::new(half_width, cells).is_err() {
        return Err(Error::Format(format!("invalid grid R={half_width}, n={cells}")));
    }
    let lens: Vec<usize> = (0..ncomp).map(|c| probe.expected_len(c)).collect();
    let need = HEADER + 8 * lens.iter().sum::<usize>();
    if bytes.len() != need {
        return Err(Error::Format(format!("payload is {} bytes, header implies {}", bytes.len() - HEADER, need - HEADER)));
    }
    let mut off = HEADER;
    let mut components = Vec::with_capacity(ncomp);
    for l in lens {
        components.push((0..l).map(|i| f64_at(off + 8 * i)).collect());
        off += 8 * l;
    }
    let out = RawField { components, ..probe };
    out.check()?;
    Ok(out)
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_raw(path: &Path, f: &RawField) -> Result<()> {
    write_atomic(path, &encode(f)?)
}

pub fn read_raw(path: &Path) -> Result<RawField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_scalar<T: Real>(path: &Path, f: &ScalarField<T>) -> Result<()> {
    write_raw(path, &RawField::from_scalar(f))
}

pub fn write_vector<T: Real>(path: &Path, v: &VectorField<T>) -> Result<()> {
    write_raw(path, &RawField::from_vector(v))
}

pub fn read_field<T: Real>(path: &Path) -> Result<FieldData<T>> {
    read_raw(path)?.into_field()
}

pub fn read_scalar<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    match read_field(path)? {
        FieldData::Scalar(s) => Ok(s),
        FieldData::Vector(_) => Err(Error::Format(format!("{}: expected a scalar field", path.display()))),
    }
}

pub fn read_vector<T: Real>(path: &Path) -> Result<VectorField<T>> {
    match read_field(path)? {
        FieldData::Vector(v) => Ok(v),
        FieldData::Scalar(_) => Err(Error::Format(format!("{}: expected a vector field", path.display()))),
    }
}

fn profile_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("u0.obbq"), path.with_extension("cells.obbq"))
}

/// Stores heat profiles as two files next to `path`: `U₀` on faces and a
/// 16-component cell bundle (`Θ₀`, `U₀` at centres, `∇U₀`, `∇Θ₀`).
pub fn write_profiles<T: Real>(path: &Path, p: &HeatProfiles<T>) -> Result<()> {
    let (faces, cells) = profile_paths(path);
    let mut bundle: Vec<&ScalarField<T>> = vec![p.theta0()];
    bundle.extend(p.u0_center().iter());
    bundle.extend(p.grad_u0().iter().flatten());
    bundle.extend(p.grad_theta0().iter());
    write_raw(&cells, &RawField::cell_bundle(p.grid(), &bundle))?;
    write_vector(&faces, p.u0())
}

pub fn read_profiles<T: Real>(path: &Path, data: &HomogeneousData<T>, quad: &QuadratureConfig) -> Result<HeatProfiles<T>> {
    let (faces, cells) = profile_paths(path);
    let u0 = read_vector::<T>(&faces)?;
    let s = read_raw(&cells)?.into_scalars::<T>()?;
    if s.len() != 16 {
        return Err(Error::Format(format!("profile bundle has {} components, expected 16", s.len())));
    }
    if s[0].grid() != u0.grid() {
        return Err(Error::GridMismatch);
    }
    let mut it = s.into_iter();
    let mut next = || it.next().expect("sixteen components");
    let theta0 = next();
    let u0c = [next(), next(), next()];
    let gu = [[next(), next(), next()], [next(), next(), next()], [next(), next(), next()]];
    let gt = [next(), next(), next()];
    Ok(HeatProfiles::from_parts(u0, theta0, u0c, gu, gt, data.clone(), *quad))
}

/// Axis-aligned cut through a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slice {
    /// All points on the plane `x_axis = value` (nearest grid plane).
    Plane { axis: usize, value: f64 },
    /// All points on the line through `(a, b)` in the other two coordinates,
    /// running along `axis`.
    Line { axis: usize, at: [f64; 2] },
}

impl Slice {
    /// Parses `z=0` as a plane and `x:y=0,z=0` as a line along x.
    pub fn parse(spec: &str) -> Result<Self> {
        let axis_of = |s: &str| match s.trim() {
            "x" => Ok(0),
            "y" => Ok(1),
            "z" => Ok(2),
            other => Err(Error::InvalidInput(format!("unknown axis {other:?}"))),
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("cannot parse {s:?}")));
        if let Some((along, rest)) = spec.split_once(':') {
            let axis = axis_of(along)?;
            let mut at = [f64::NAN; 2];
            for part in rest.split(',') {
                let (a, v) = part.split_once('=').ok_or_else(|| Error::InvalidInput(format!("bad line spec {spec:?}")))?;
                let a = axis_of(a)?;
                if a == axis {
                    return Err(Error::InvalidInput(format!("line spec {spec:?} fixes its own axis")));
                }
                let slot = if a == (axis + 1) % 3 { 0 } else { 1 };
                at[slot] = num(v)?;
            }
            if at.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidInput(format!("line spec {spec:?} must fix both other axes")));
            }
            return Ok(Slice::Line { axis, at });
        }
        let (a, v) = spec.split_once('=').ok_or_else(|| Error::InvalidInput(format!("bad plane spec {spec:?}")))?;
        Ok(Slice::Plane { axis: axis_of(a)?, value: num(v)? })
    }
}

/// Writes a slice of cell-sampled values as CSV. Planes have header
/// `(u, v, value)` with the two free coordinates in cyclic order, lines
/// `(s, value)`.
pub fn export_slice<T: Real>(path: &Path, grid: &Grid<T>, values: &[T], slice: Slice) -> Result<usize> {
    let (bytes, rows) = slice_csv(grid, values, slice)?;
    write_atomic(path, &bytes)?;
    Ok(rows)
}

/// CSV text of a slice and its row count.
pub fn slice_csv<T: Real>(grid: &Grid<T>, values: &[T], slice: Slice) -> Result<(Vec<u8>, usize)> {
    let n = grid.cells();
    let names = ["x", "y", "z"];
    let nearest = |v: f64| {
        let h = to64(grid.spacing());
        let r = to64(grid.half_width());
        (((v + r) / h - 0.5).round().max(0.0) as usize).min(n - 1)
    };
    let at = |p: [usize; 3]| to64(values[crate::grid::index([n, n, n], p[0], p[1], p[2])]);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = 0;
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    match slice {
        Slice::Plane { axis, value } => {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let (a, b) = (a.min(b), a.max(b));
            w.write_record([names[a], names[b], "value"]).map_err(csv_err)?;
            let fixed = nearest(value);
            for j in 0..n {
                for i in 0..n {
                    let mut p = [0; 3];
                    p[axis] = fixed;
                    p[a] = i;
                    p[b] = j;
                    w.write_record([to64(grid.center(i)).to_string(), to64(grid.center(j)).to_string(), at(p).to_string()])
                        .map_err(csv_err)?;
                    rows += 1;
                }
            }
        }
        Slice::Line { axis, at: fixed } => {
            w.write_record([names[axis], "value"]).map_err(csv_err)?;
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..n {
                let mut p = [0; 3];
                p[axis] = i;
                p[a] = nearest(fixed[0]);
                p[b] = nearest(fixed[1]);
                w.write_record([to64(grid.center(i)).to_string(), at(p).to_string()]).map_err(csv_err)?;
                rows += 1;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok((bytes, rows))
}

/// Cell-centred samples of a field: scalars as stored, vectors as the face
/// average of one component.
pub fn cell_values<T: Real>(field: &FieldData<T>, component: Option<usize>) -> Result<(Grid<T>, Vec<T>)> {
    match field {
        FieldData::Scalar(s) => Ok((*s.grid(), s.values().to_vec())),
        FieldData::Vector(v) => {
            let d = component.ok_or_else(|| Error::InvalidInput("a vector field needs a component".into()))?;
            if d > 2 {
                return Err(Error::InvalidInput(format!("component {d} out of range")));
            }
            let g = v.grid();
            let n = g.cells();
            let fd = g.dims(Stagger::Face(d));
            let c = v.component(d);
            let mut out = vec![T::zero(); len([n, n, n])];
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let mut q = [i, j, k];
                        let a = c[crate::grid::index(fd, q[0], q[1], q[2])];
                        q[d] += 1;
                        let b = c[crate::grid::index(fd, q[0], q[1], q[2])];
                        out[crate::grid::index([n, n, n], i, j, k)] = (a + b) / lit(2.0);
                    }
                }
            }
            Ok((*g, out))
        }
    }
}

/// Builtin velocity mode in a run configuration, e.g. `{"swirl": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    Swirl(f64),
    Source(f64),
}

/// Builtin temperature mode, e.g. `{"radial": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TemperatureSpec {
    Radial(f64),
    Harmonic { degree: usize, order: i32, strength: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub velocity: Vec<VelocitySpec>,
    pub temperature: Vec<TemperatureSpec>,
    /// CSV sphere table; excludes the builtin modes.
    pub table: Option<PathBuf>,
    pub amplitude: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { velocity: vec![], temperature: vec![TemperatureSpec::Radial(1.0)], table: None, amplitude: 1.0 }
    }
}

impl DataConfig {
    pub fn build<T: Real>(&self) -> Result<HomogeneousData<T>> {
        if let Some(path) = &self.table {
            if !self.velocity.is_empty() || !self.temperature.is_empty() {
                return Err(Error::Config("data.table excludes data.velocity and data.temperature".into()));
            }
            return HomogeneousData::from_csv(path, lit(self.amplitude));
        }
        let velocity = self
            .velocity
            .iter()
            .map(|v| match *v {
                VelocitySpec::Swirl(s) => VelocityMode::Swirl { strength: lit(s) },
                VelocitySpec::Source(s) => VelocityMode::Source { strength: lit(s) },
            })
            .collect();
        let temperature = self
            .temperature
            .iter()
            .map(|t| match *t {
                TemperatureSpec::Radial(s) => TemperatureMode::Radial { strength: lit(s) },
                TemperatureSpec::Harmonic { degree, order, strength } => TemperatureMode::Harmonic { degree, order, strength: lit(strength) },
            })
            .collect();
        HomogeneousData::builtin(velocity, temperature, lit(self.amplitude))
    }
}

/// Single-domain grid of the `heat` and `solve` commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub radius: f64,
    pub cells: usize,
    /// Gravity cutoff index; `⌈R⌉` when absent.
    pub cutoff: Option<u32>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { radius: 6.0, cells: 64, cutoff: None }
    }
}

impl GridConfig {
    pub fn cutoff_index(&self) -> u32 {
        self.cutoff.unwrap_or(self.radius.ceil() as u32)
    }
}

/// Everything one CLI invocation needs. Unknown keys are rejected at every
/// level; absent sections take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub grid: GridConfig,
    pub quadrature: QuadratureConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            grid: GridConfig::default(),
            quadrature: QuadratureConfig::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a configuration document and applies `key=value` overrides,
    /// where `key` is a dotted path and `value` is JSON or a bare string.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => "{}".to_string(),
        };
        Self::from_json(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        self.solver.validate()?;
        self.sweep.validate()?;
        if !(self.data.amplitude.is_finite()) {
            return Err(Error::Config("data.amplitude must be finite".into()));
        }
        Grid::<f64>::new(self.grid.radius, self.grid.cells).map_err(|e| Error::Config(e.to_string()))?;
        if self.grid.cutoff_index() == 0 {
            return Err(Error::Config("grid.cutoff must be positive".into()));
        }
        Ok(())
    }

    /// The defaults as a pretty-printed document.
    pub fn defaults_json() -> String {
        serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialize")
    }
}

fn apply_override(doc: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in override key '{key}'")));
        }
        let obj = match node {
            serde_json::Value::Object(m) => m,
            _ => return Err(Error::Config(format!("override key '{key}' descends into a non-object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}
