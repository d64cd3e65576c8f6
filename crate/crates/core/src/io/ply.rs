//! ASCII PLY export of Gaussians as ellipsoid meshes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::Result;
use crate::map::GmMap;
use crate::types::{DistGaussian, GaussianKind, Vec3};

/// Which Gaussians to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindFilter {
    Occupied,
    Free,
    All,
}

impl KindFilter {
    pub fn admits(self, kind: GaussianKind) -> bool {
        match self {
            KindFilter::All => true,
            KindFilter::Occupied => kind == GaussianKind::Occupied,
            KindFilter::Free => kind == GaussianKind::Free,
        }
    }
}

impl std::str::FromStr for KindFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "occ" | "occupied" => Ok(KindFilter::Occupied),
            "free" => Ok(KindFilter::Free),
            "all" => Ok(KindFilter::All),
            other => Err(format!("unknown kind {other:?} (expected occ, free or all)")),
        }
    }
}

/// Unit icosphere: icosahedron subdivided `levels` times.
pub fn icosphere(levels: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Maps the unit sphere onto the `scale`-sigma ellipsoid of `g`.
fn ellipsoid_transform(g: &DistGaussian, scale: f64) -> Matrix3<f64> {
    let (vals, vecs) = g.sigma.eigen();
    let root = vals.map(|v| v.max(0.0).sqrt() * scale);
    vecs * Matrix3::from_diagonal(&root) * vecs.transpose()
}

/// Renders the selected Gaussians as one ellipsoid each.
pub fn ply_string(map: &GmMap, filter: KindFilter) -> String {
    let (sphere, faces) = icosphere(2);
    let selected: Vec<&DistGaussian> = map
        .gaussians
        .values()
        .filter(|g| filter.admits(g.kind()))
        .map(|g| &g.dist)
        .collect();
    let nv = sphere.len() * selected.len();
    let nf = faces.len() * selected.len();
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\ncomment gmmap ellipsoids at {} sigma\n\
         element vertex {nv}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {nf}\nproperty list uchar int vertex_indices\nend_header\n",
        map.alpha_m
    );
    for g in &selected {
        let a = ellipsoid_transform(g, map.alpha_m);
        let rgb = match g.kind {
            GaussianKind::Occupied => "200 60 40",
            GaussianKind::Free => "60 120 220",
        };
        for v in &sphere {
            let p = g.mu + a * v;
            let _ = writeln!(out, "{} {} {} {rgb}", p.x as f32, p.y as f32, p.z as f32);
        }
    }
    for k in 0..selected.len() {
        let base = (k * sphere.len()) as u32;
        for f in &faces {
            let _ = writeln!(out, "3 {} {} {}", base + f[0], base + f[1], base + f[2]);
        }
    }
    out
}

pub fn export_ply(map: &GmMap, path: &Path, filter: KindFilter) -> Result<()> {
    std::fs::write(path, ply_string(map, filter))?;
    Ok(())
}
