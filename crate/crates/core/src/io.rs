//! CSV value-function files.
//!
//! A file starts with `# key=value` metadata lines (at least `h`), then a
//! header `t,x_1,...,x_d,value` and one row per lattice point and time.
//! Floats are written with 17 significant digits so a round trip is exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hjb::{BoundaryPolicy, Scheme, SolveResult, ValueGrid, ValueKind};
use crate::lattice::LatticeDomain;

pub type Metadata = BTreeMap<String, String>;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_meta<W: Write>(out: &mut W, meta: &Metadata) -> Result<()> {
    for (k, v) in meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidInput(format!("bad metadata entry {k:?}")));
        }
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

/// Writes a header and string rows, preceded by metadata comments.
pub fn write_table<P, I, R>(path: P, meta: &Metadata, header: &[&str], rows: I) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = BufWriter::new(File::create(path)?);
    write_meta(&mut out, meta)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Writes value grids (all on one domain) into a single file.
pub fn write_grids<P: AsRef<Path>>(path: P, grids: &[&ValueGrid], meta: &Metadata) -> Result<()> {
    let first = grids
        .first()
        .ok_or_else(|| Error::InvalidInput("no grids to write".into()))?;
    let dom = &first.domain;
    let d = dom.dim();
    let mut meta = meta.clone();
    meta.insert("h".into(), fmt_f64(dom.h));
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.push("value".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for g in grids {
        if g.domain.h != dom.h || g.domain.dim() != d {
            return Err(Error::InvalidInput("grids written together must share a mesh".into()));
        }
        let mut point = vec![0i64; d];
        for (k, v) in g.values.iter().enumerate() {
            g.domain.point_into(k, &mut point);
            let mut row = Vec::with_capacity(d + 2);
            row.push(fmt_f64(g.t));
            row.extend(point.iter().map(|&p| fmt_f64(p as f64 * dom.h)));
            row.push(fmt_f64(*v));
            rows.push(row);
        }
    }
    write_table(path, &meta, &header_refs, rows)
}

/// Metadata comment lines at the top of a file.
pub fn read_metadata<P: AsRef<Path>>(path: P) -> Result<Metadata> {
    let mut meta = Metadata::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(meta)
}

/// Reads grids back, one per distinct `t`, in file order.
pub fn read_grids<P: AsRef<Path>>(path: P) -> Result<(Vec<ValueGrid>, Metadata)> {
    let path = path.as_ref();
    let meta = read_metadata(path)?;
    let h: f64 = meta
        .get("h")
        .and_then(|s| s.parse().ok())
        .filter(|h: &f64| *h > 0.0)
        .ok_or_else(|| Error::InvalidInput(format!("{}: missing or bad `h` metadata", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    if n < 3 || &headers[0] != "t" || &headers[n - 1] != "value" {
        return Err(Error::InvalidInput(format!(
            "{}: header must be t,x_1..x_d,value",
            path.display()
        )));
    }
    let d = n - 2;
    // (t, points, values) per time block
    let mut blocks: Vec<(f64, Vec<Vec<i64>>, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("{}: bad number {:?}: {e}", path.display(), &rec[i])))
        };
        let t = parse(0)?;
        let point = (1..=d)
            .map(|i| parse(i).map(|x| (x / h).round() as i64))
            .collect::<Result<Vec<_>>>()?;
        let v = parse(n - 1)?;
        match blocks.last_mut() {
            Some(b) if b.0 == t => {
                b.1.push(point);
                b.2.push(v);
            }
            _ => blocks.push((t, vec![point], vec![v])),
        }
    }
    if blocks.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no data rows", path.display())));
    }
    let mut grids = Vec::with_capacity(blocks.len());
    let mut shared: Option<Arc<LatticeDomain>> = None;
    for (t, points, vals) in blocks {
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in &points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let dom = match &shared {
            Some(s) if s.lo == lo && s.hi == hi => s.clone(),
            _ => Arc::new(LatticeDomain::new(h, lo, hi)?),
        };
        if dom.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{}: slice t={t} does not fill its lattice box",
                path.display()
            )));
        }
        let mut values = vec![f64::NAN; dom.len()];
        for (p, v) in points.iter().zip(vals) {
            let k = dom.index_of(p).expect("inside bounding box");
            values[k] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput(format!("{}: duplicate rows at t={t}", path.display())));
        }
        shared = Some(dom.clone());
        grids.push(ValueGrid { t, domain: dom, values });
    }
    Ok((grids, meta))
}

/// Metadata describing a solve, for [`write_solution`].
pub fn solution_metadata(sol: &SolveResult) -> Metadata {
    let mut m = Metadata::new();
    m.insert("kind".into(), sol.kind.as_str().into());
    m.insert("dt".into(), fmt_f64(sol.dt));
    m.insert("boundary".into(), sol.boundary_policy.as_str().into());
    m.insert(
        "scheme".into(),
        match sol.scheme {
            Scheme::Euler => "euler".into(),
            Scheme::Rk4 => "rk4".into(),
        },
    );
    m
}

/// Writes every stored slice of a solve; `extra` is merged into the metadata.
pub fn write_solution<P: AsRef<Path>>(path: P, sol: &SolveResult, extra: &Metadata) -> Result<()> {
    let mut meta = solution_metadata(sol);
    meta.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    let grids: Vec<&ValueGrid> = sol.slices.iter().collect();
    write_grids(path, &grids, &meta)
}

/// Reads a file produced by [`write_solution`].
pub fn read_solution<P: AsRef<Path>>(path: P) -> Result<(SolveResult, Metadata)> {
    let path = path.as_ref();
    let (mut slices, meta) = read_grids(path)?;
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::InvalidInput(format!("{}: missing `{k}` metadata", path.display())))
    };
    let kind = match get("kind")?.as_str() {
        "upper" => ValueKind::Upper,
        "lower" => ValueKind::Lower,
        other => return Err(Error::InvalidInput(format!("unknown value kind {other:?}"))),
    };
    let dt: f64 = get("dt")?
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{}: bad `dt` metadata", path.display())))?;
    let boundary_policy = match meta.get("boundary").map(String::as_str) {
        Some("strict") => BoundaryPolicy::Strict,
        _ => BoundaryPolicy::Freeze,
    };
    let scheme = match meta.get("scheme").map(String::as_str) {
        Some("rk4") => Scheme::Rk4,
        _ => Scheme::Euler,
    };
    slices.sort_by(|a, b| b.t.total_cmp(&a.t));
    let h = slices[0].domain.h;
    let checkpoints = vec![slices.last().expect("nonempty").t];
    Ok((SolveResult { slices, kind, h, dt, scheme, boundary_policy, checkpoints }, meta))
}
