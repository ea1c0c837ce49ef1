//! ESRI ASCII grid and long-form CSV serialization of pixel images.
//!
//! Square cells are written with a `cellsize` header; rectangular cells use the
//! `dx`/`dy` header pair understood by GDAL. Rows are written north first.
//! Unmasked and missing cells are written as `NODATA_value`.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::PixelImage;
use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;

pub const NODATA: f64 = -9999.0;

/// Significant digits used for cell values.
pub const VALUE_DIGITS: usize = 12;

pub fn format_value(v: f64) -> String {
    format!("{:.*e}", VALUE_DIGITS - 1, v)
}

pub fn to_ascii_grid(img: &PixelImage) -> String {
    let mut out = String::new();
    let o = img.origin();
    let _ = writeln!(out, "ncols {}", img.nx());
    let _ = writeln!(out, "nrows {}", img.ny());
    let _ = writeln!(out, "xllcorner {}", o.x);
    let _ = writeln!(out, "yllcorner {}", o.y);
    if img.dx() == img.dy() {
        let _ = writeln!(out, "cellsize {}", img.dx());
    } else {
        let _ = writeln!(out, "dx {}", img.dx());
        let _ = writeln!(out, "dy {}", img.dy());
    }
    let _ = writeln!(out, "NODATA_value {}", NODATA);
    for row in (0..img.ny()).rev() {
        let line: Vec<String> = (0..img.nx())
            .map(|col| match img.value(row * img.nx() + col) {
                Some(v) => format_value(v),
                None => format!("{NODATA}"),
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(img: &PixelImage, path: &Path) -> Result<()> {
    std::fs::write(path, to_ascii_grid(img))?;
    Ok(())
}

pub fn read_ascii_grid(path: &Path) -> Result<PixelImage> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_ascii_grid(&text)
}

pub fn parse_ascii_grid(text: &str) -> Result<PixelImage> {
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut ncols = None;
    let mut nrows = None;
    let (mut xll, mut yll) = (None, None);
    let mut centered = false;
    let (mut dx, mut dy) = (None, None);
    let mut nodata = NODATA;
    while let Some(&tok) = tokens.peek() {
        if !tok.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let key = tok.to_ascii_lowercase();
        tokens.next();
        let val = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("header {key} has no value")))?;
        let num: f64 = val
            .parse()
            .map_err(|_| Error::Parse(format!("header {key}: bad number {val:?}")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num as usize),
            "nrows" => nrows = Some(num as usize),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                centered = true;
            }
            "yllcenter" => {
                yll = Some(num);
                centered = true;
            }
            "cellsize" => {
                dx = Some(num);
                dy = Some(num);
            }
            "dx" | "xcellsize" => dx = Some(num),
            "dy" | "ycellsize" => dy = Some(num),
            "nodata_value" => nodata = num,
            other => return Err(Error::Parse(format!("unknown header {other:?}"))),
        }
    }
    let missing = |k: &str| Error::Parse(format!("missing header {k}"));
    let nx = ncols.ok_or_else(|| missing("ncols"))?;
    let ny = nrows.ok_or_else(|| missing("nrows"))?;
    let dx = dx.ok_or_else(|| missing("cellsize"))?;
    let dy = dy.ok_or_else(|| missing("cellsize"))?;
    let (mut x0, mut y0) = (xll.ok_or_else(|| missing("xllcorner"))?, yll.ok_or_else(|| missing("yllcorner"))?);
    if centered {
        x0 -= 0.5 * dx;
        y0 -= 0.5 * dy;
    }
    let mut values = vec![None; nx * ny];
    for row in (0..ny).rev() {
        for col in 0..nx {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {} values", nx * ny)))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad cell value {tok:?}")))?;
            if v != nodata {
                values[row * nx + col] = Some(v);
            }
        }
    }
    if tokens.next().is_some() {
        return Err(Error::Parse("trailing data after the last row".into()));
    }
    PixelImage::from_values(PlanarPoint::new(x0, y0), nx, ny, dx, dy, values)
}

/// Writes one `x,y,value` row per defined cell, at the cell center.
pub fn write_csv<W: Write>(img: &PixelImage, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for (k, v) in img.defined() {
        let c = img.cell_center(k);
        w.write_record([c.x.to_string(), c.y.to_string(), format_value(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads long-form `x,y,value` rows onto the grid of `template`; cells with no
/// row become missing.
pub fn read_csv_onto<R: Read>(template: &PixelImage, input: R) -> Result<PixelImage> {
    let mut values = vec![None; template.len()];
    let mut rdr = csv::Reader::from_reader(input);
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse("short CSV row".into()))?
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number in CSV row {:?}", rec)))
        };
        let p = PlanarPoint::new(num(0)?, num(1)?);
        if let Some(k) = template.cell_index(p) {
            values[k] = Some(num(2)?);
        }
    }
    Ok(template.with_values(values))
}
