//! Splits a mesh into overlapping parts on a 2x2 grid and merges displaced
//! parts back, averaging vertices that several parts share.

use selfprior::fixtures;
use selfprior::mesh::{merge_parts, split_into_parts};

fn main() -> selfprior::Result<()> {
    let mesh = fixtures::icosphere(4);
    let pm = split_into_parts(&mesh, 2, 0.05)?;
    println!("{} faces split over axes {:?}", mesh.face_count(), pm.axes);
    for (i, p) in pm.parts.iter().enumerate() {
        println!(
            "part {i}: {} faces, {} vertices",
            p.mesh.face_count(),
            p.mesh.vertex_count()
        );
    }
    // Push every part outward by a different amount; shared vertices average.
    let displaced: Vec<Vec<[f64; 3]>> = pm
        .parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.mesh
                .vertices()
                .iter()
                .map(|v| v.map(|x| x * (1.0 + 0.01 * i as f64)))
                .collect()
        })
        .collect();
    let merged = merge_parts(&pm, &displaced)?;
    println!(
        "merged: {} faces, watertight {}",
        merged.face_count(),
        merged.is_watertight()
    );
    Ok(())
}
