//! Solution snapshots (little-endian binary) and columnar plot data.
//!
//! Snapshot layout: the magic `SPKSNAP`, a `u32` format version, a
//! length-prefixed JSON header (solution metadata, mesh options and
//! patches), then node coordinates, boundary flags, triangles and the
//! nodal values.

use std::fmt::Write as _;
use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, MeshOptions, SpikePatch};
use super::newton::DiscreteSolution;
use crate::{Error, Result, Vec2};

const MAGIC: &[u8; 7] = b"SPKSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    p: f64,
    residual_norm: f64,
    iterations: usize,
    peak_points: Vec<Vec2>,
    peak_values: Vec<f64>,
    eps_measured: Vec<f64>,
    energy: f64,
    min_interior: f64,
    mesh_options: MeshOptions,
    patches: Vec<SpikePatch>,
}

pub fn write_snapshot<W: Write>(mut w: W, mesh: &Mesh, sol: &DiscreteSolution) -> Result<()> {
    if sol.u.len() != mesh.len() {
        return Err(Error::Snapshot(format!("{} values for {} nodes", sol.u.len(), mesh.len())));
    }
    let header = Header {
        p: sol.p,
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        peak_points: sol.peak_points.clone(),
        peak_values: sol.peak_values.clone(),
        eps_measured: sol.eps_measured.clone(),
        energy: sol.energy,
        min_interior: sol.min_interior,
        mesh_options: mesh.options,
        patches: mesh.patches.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(SNAPSHOT_VERSION)?;
    w.write_u64::<LE>(json.len() as u64)?;
    w.write_all(&json)?;
    w.write_u64::<LE>(mesh.len() as u64)?;
    for x in &mesh.nodes {
        w.write_f64::<LE>(x.x)?;
        w.write_f64::<LE>(x.y)?;
    }
    for &b in &mesh.on_boundary {
        w.write_u8(b as u8)?;
    }
    w.write_u64::<LE>(mesh.triangles.len() as u64)?;
    for t in &mesh.triangles {
        for &i in t {
            w.write_u32::<LE>(i as u32)?;
        }
    }
    for &v in &sol.u {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R, what: &str, limit: u64) -> Result<usize> {
    let n = r.read_u64::<LE>()?;
    if n > limit {
        return Err(Error::Snapshot(format!("{what} count {n} exceeds {limit}")));
    }
    Ok(n as usize)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Mesh, DiscreteSolution)> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let hlen = read_len(&mut r, "header byte", 1 << 28)?;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json)?;
    let n = read_len(&mut r, "node", 1 << 32)?;
    let nodes = (0..n)
        .map(|_| Ok(Vec2::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?)))
        .collect::<Result<Vec<_>>>()?;
    let on_boundary = (0..n).map(|_| Ok(r.read_u8()? != 0)).collect::<Result<Vec<_>>>()?;
    let nt = read_len(&mut r, "triangle", 1 << 32)?;
    let triangles = (0..nt)
        .map(|_| Ok([r.read_u32::<LE>()? as usize, r.read_u32::<LE>()? as usize, r.read_u32::<LE>()? as usize]))
        .collect::<Result<Vec<_>>>()?;
    let u = (0..n).map(|_| Ok(r.read_f64::<LE>()?)).collect::<Result<Vec<_>>>()?;
    let mesh = Mesh::from_parts(nodes, triangles, on_boundary, h.patches, h.mesh_options)?;
    let sol = DiscreteSolution {
        p: h.p,
        u,
        residual_norm: h.residual_norm,
        iterations: h.iterations,
        peak_points: h.peak_points,
        peak_values: h.peak_values,
        eps_measured: h.eps_measured,
        energy: h.energy,
        min_interior: h.min_interior,
    };
    Ok((mesh, sol))
}

/// `u` along `rays` directions from `center`, sampled at `samples` radii in
/// `[0, r_max]`: one column of radii and one column per ray. Points
/// outside the mesh are written as `nan`.
pub fn ray_table(mesh: &Mesh, u: &[f64], center: Vec2, rays: usize, r_max: f64, samples: usize) -> String {
    let angles: Vec<f64> = (0..rays).map(|k| std::f64::consts::TAU * k as f64 / rays as f64).collect();
    let mut out = String::from("# r");
    for a in &angles {
        let _ = write!(out, " u(theta={a:.6})");
    }
    out.push('\n');
    let steps = samples.max(2) - 1;
    for s in 0..=steps {
        let r = r_max * s as f64 / steps as f64;
        let _ = write!(out, "{r:.12e}");
        for a in &angles {
            let x = center + r * Vec2::new(a.cos(), a.sin());
            let v = mesh.interpolate(u, x).unwrap_or(f64::NAN);
            let _ = write!(out, " {v:.12e}");
        }
        out.push('\n');
    }
    out
}

/// One row per exponent: `p` followed by the ascending eigenvalues.
pub fn lambda_table(rows: &[(f64, Vec<f64>)]) -> String {
    let width = rows.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    let mut out = String::from("# p");
    for l in 1..=width {
        let _ = write!(out, " lambda_{l}");
    }
    out.push('\n');
    for (p, lams) in rows {
        let _ = write!(out, "{p}");
        for l in 0..width {
            match lams.get(l) {
                Some(v) => {
                    let _ = write!(out, " {v:.15e}");
                }
                None => out.push_str(" nan"),
            }
        }
        out.push('\n');
    }
    out
}
