//! Binary grid-field container.
//!
//! A flat little-endian file carrying grid fields for one discretized torus
//! and band cover, used to move projector candidates and scalar backgrounds
//! between runs.  Layout:
//!
//! ```text
//! magic      8 B   "TORFLD1\n"
//! naxes      u32   real axes (2n)
//! dims       naxes × u64
//! nsub       u32   subdivided axes, then nsub × u32 axis ids
//! halfwidth  u32
//! ncharts    u32   chart table: per chart, per axis (lo i64, len u64)
//! nfields    u32   field table: per field
//!              name_len u32, name UTF-8,
//!              kind u32 (0 endo, 1 scalar), r u32,
//!              payload: endo → npts·r² × (re f64, im f64), scalar → npts × f64
//! ```
//!
//! The chart table records the cover the fields were produced on;
//! `check_cover` verifies it against a live cover before fields are consumed.
//! Čech-structured data (transitions, twist cocycles) is not stored here;
//! those come from presets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::bundle::EndoField;
use crate::twist::ChartCover;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TORFLD1\n";
/// Desk-scale guard against absurd allocations from corrupt headers.
const MAX_POINTS: usize = 1 << 26;

#[derive(Debug, Clone)]
pub enum StoredField {
    /// Owner-gauge endomorphism field, grid-major r×r blocks.
    Endo(EndoField),
    /// Real scalar grid field.
    Scalar(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct FieldContainer {
    pub dims: Vec<usize>,
    pub sub_axes: Vec<usize>,
    pub halfwidth: usize,
    /// (lo, len) per chart per axis, as constructed.
    charts: Vec<(Vec<isize>, Vec<usize>)>,
    pub fields: Vec<(String, StoredField)>,
}

impl FieldContainer {
    pub fn for_cover(cover: &ChartCover) -> FieldContainer {
        FieldContainer {
            dims: cover.grid.dims.clone(),
            sub_axes: cover.sub_axes.clone(),
            halfwidth: cover.halfwidth,
            charts: cover.charts.iter().map(|c| (c.lo.clone(), c.len.clone())).collect(),
            fields: Vec::new(),
        }
    }

    pub fn npoints(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn push_endo(&mut self, name: &str, f: &EndoField) -> Result<()> {
        if f.npoints() != self.npoints() {
            return Err(Error::ShapeMismatch(format!(
                "field '{name}': {} points vs grid {}",
                f.npoints(),
                self.npoints()
            )));
        }
        self.fields.push((name.to_string(), StoredField::Endo(f.clone())));
        Ok(())
    }

    pub fn push_scalar(&mut self, name: &str, f: &[f64]) -> Result<()> {
        if f.len() != self.npoints() {
            return Err(Error::ShapeMismatch(format!(
                "field '{name}': {} values vs grid {}",
                f.len(),
                self.npoints()
            )));
        }
        self.fields.push((name.to_string(), StoredField::Scalar(f.to_vec())));
        Ok(())
    }

    pub fn endo(&self, name: &str) -> Result<&EndoField> {
        for (n, f) in &self.fields {
            if n == name {
                if let StoredField::Endo(e) = f {
                    return Ok(e);
                }
                return Err(Error::Config(format!("field '{name}' is not an endo field")));
            }
        }
        Err(Error::Config(format!("container has no field '{name}'")))
    }

    pub fn scalar(&self, name: &str) -> Result<&[f64]> {
        for (n, f) in &self.fields {
            if n == name {
                if let StoredField::Scalar(s) = f {
                    return Ok(s);
                }
                return Err(Error::Config(format!("field '{name}' is not a scalar field")));
            }
        }
        Err(Error::Config(format!("container has no field '{name}'")))
    }

    /// Fields are only meaningful on the cover they were written from.
    pub fn check_cover(&self, cover: &ChartCover) -> Result<()> {
        let live: Vec<(Vec<isize>, Vec<usize>)> =
            cover.charts.iter().map(|c| (c.lo.clone(), c.len.clone())).collect();
        if self.dims != cover.grid.dims
            || self.sub_axes != cover.sub_axes
            || self.halfwidth != cover.halfwidth
            || self.charts != live
        {
            return Err(Error::ShapeMismatch(format!(
                "container cover (dims {:?}, sub {:?}, w {}) vs live cover (dims {:?}, sub {:?}, w {})",
                self.dims, self.sub_axes, self.halfwidth,
                cover.grid.dims, cover.sub_axes, cover.halfwidth
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        put_u32(&mut w, self.dims.len())?;
        for &d in &self.dims {
            put_u64(&mut w, d as u64)?;
        }
        put_u32(&mut w, self.sub_axes.len())?;
        for &a in &self.sub_axes {
            put_u32(&mut w, a)?;
        }
        put_u32(&mut w, self.halfwidth)?;
        put_u32(&mut w, self.charts.len())?;
        for (lo, len) in &self.charts {
            for a in 0..self.dims.len() {
                put_i64(&mut w, lo[a] as i64)?;
                put_u64(&mut w, len[a] as u64)?;
            }
        }
        put_u32(&mut w, self.fields.len())?;
        for (name, field) in &self.fields {
            put_u32(&mut w, name.len())?;
            w.write_all(name.as_bytes())?;
            match field {
                StoredField::Endo(e) => {
                    put_u32(&mut w, 0)?;
                    put_u32(&mut w, e.r)?;
                    for z in &e.data {
                        w.write_all(&z.re.to_le_bytes())?;
                        w.write_all(&z.im.to_le_bytes())?;
                    }
                }
                StoredField::Scalar(s) => {
                    put_u32(&mut w, 1)?;
                    put_u32(&mut w, 0)?;
                    for v in s {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<FieldContainer> {
        let mut rd = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        rd.read_exact(&mut magic)
            .map_err(|_| Error::Parse(format!("{}: truncated header", path.display())))?;
        if &magic != MAGIC {
            return Err(Error::Parse(format!(
                "{}: bad magic {:?} (expected {:?})",
                path.display(),
                magic,
                MAGIC
            )));
        }
        let ctx = |what: &str| format!("{}: truncated {what}", path.display());
        let naxes = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("axis count")))? as usize;
        if naxes == 0 || naxes > 8 {
            return Err(Error::Parse(format!("{}: {naxes} axes out of range", path.display())));
        }
        let mut dims = Vec::with_capacity(naxes);
        let mut npts = 1usize;
        for _ in 0..naxes {
            let d = get_u64(&mut rd).map_err(|_| Error::Parse(ctx("dims")))? as usize;
            npts = npts.saturating_mul(d);
            dims.push(d);
        }
        if npts == 0 || npts > MAX_POINTS {
            return Err(Error::Parse(format!(
                "{}: grid with {npts} points out of range",
                path.display()
            )));
        }
        let nsub = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("sub-axis count")))? as usize;
        if nsub > naxes {
            return Err(Error::Parse(format!("{}: {nsub} sub-axes > {naxes}", path.display())));
        }
        let mut sub_axes = Vec::with_capacity(nsub);
        for _ in 0..nsub {
            sub_axes.push(get_u32(&mut rd).map_err(|_| Error::Parse(ctx("sub-axes")))? as usize);
        }
        let halfwidth = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("halfwidth")))? as usize;
        let ncharts = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("chart count")))? as usize;
        if ncharts > 1 << nsub.min(8) {
            return Err(Error::Parse(format!("{}: {ncharts} charts out of range", path.display())));
        }
        let mut charts = Vec::with_capacity(ncharts);
        for _ in 0..ncharts {
            let mut lo = Vec::with_capacity(naxes);
            let mut len = Vec::with_capacity(naxes);
            for _ in 0..naxes {
                lo.push(get_i64(&mut rd).map_err(|_| Error::Parse(ctx("chart table")))? as isize);
                len.push(get_u64(&mut rd).map_err(|_| Error::Parse(ctx("chart table")))? as usize);
            }
            charts.push((lo, len));
        }
        let nfields = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("field count")))? as usize;
        if nfields > 1024 {
            return Err(Error::Parse(format!("{}: {nfields} fields out of range", path.display())));
        }
        let mut fields = Vec::with_capacity(nfields);
        for _ in 0..nfields {
            let name_len = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("field name")))? as usize;
            if name_len > 4096 {
                return Err(Error::Parse(format!(
                    "{}: field name of {name_len} bytes out of range",
                    path.display()
                )));
            }
            let mut buf = vec![0u8; name_len];
            rd.read_exact(&mut buf).map_err(|_| Error::Parse(ctx("field name")))?;
            let name = String::from_utf8(buf)
                .map_err(|_| Error::Parse(format!("{}: field name not UTF-8", path.display())))?;
            let kind = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("field kind")))?;
            let r = get_u32(&mut rd).map_err(|_| Error::Parse(ctx("field rank")))? as usize;
            let field = match kind {
                0 => {
                    if r == 0 || r > 64 {
                        return Err(Error::Parse(format!(
                            "{}: field '{name}' rank {r} out of range",
                            path.display()
                        )));
                    }
                    let mut data = Vec::with_capacity(npts * r * r);
                    for _ in 0..npts * r * r {
                        let re = get_f64(&mut rd)
                            .map_err(|_| Error::Parse(ctx("endo payload")))?;
                        let im = get_f64(&mut rd)
                            .map_err(|_| Error::Parse(ctx("endo payload")))?;
                        data.push(C64::new(re, im));
                    }
                    StoredField::Endo(EndoField { r, data })
                }
                1 => {
                    let mut data = Vec::with_capacity(npts);
                    for _ in 0..npts {
                        data.push(
                            get_f64(&mut rd).map_err(|_| Error::Parse(ctx("scalar payload")))?,
                        );
                    }
                    StoredField::Scalar(data)
                }
                k => {
                    return Err(Error::Parse(format!(
                        "{}: field '{name}' has unknown kind {k}",
                        path.display()
                    )))
                }
            };
            fields.push((name, field));
        }
        Ok(FieldContainer { dims, sub_axes, halfwidth, charts, fields })
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u32).to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_i64<W: Write>(w: &mut W, v: i64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_i64<R: Read>(r: &mut R) -> std::io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
