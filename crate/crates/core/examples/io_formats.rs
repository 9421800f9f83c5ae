//! Writes a mesh and a cloud in every supported format and reads them back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::fixtures;
use selfprior::io::{read_mesh, read_point_cloud, write_mesh, write_point_cloud, PlyEncoding};

fn main() -> selfprior::Result<()> {
    let dir = std::env::temp_dir().join("selfprior-io-example");
    std::fs::create_dir_all(&dir)?;
    let mesh = fixtures::icosphere(2);
    let cloud = fixtures::sample_cloud(&mesh, 500, &mut ChaCha8Rng::seed_from_u64(3));
    for (name, enc) in [
        ("mesh.ply", PlyEncoding::Ascii),
        ("mesh_bin.ply", PlyEncoding::BinaryLittleEndian),
        ("mesh.obj", PlyEncoding::Ascii),
    ] {
        let path = dir.join(name);
        write_mesh(&mesh, &path, enc)?;
        let back = read_mesh(&path)?;
        println!(
            "{name:<14} {:>6} bytes, identical {}",
            std::fs::metadata(&path)?.len(),
            back == mesh
        );
    }
    for name in ["cloud.xyz", "cloud.ply"] {
        let path = dir.join(name);
        write_point_cloud(&cloud, &path, PlyEncoding::Ascii)?;
        let back = read_point_cloud(&path)?;
        println!(
            "{name:<14} {:>6} bytes, points identical {}, normals kept {}",
            std::fs::metadata(&path)?.len(),
            back.points() == cloud.points(),
            back.normals() == cloud.normals()
        );
    }
    // Parse errors name the file and line.
    let bad = dir.join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n0 zero 0\n")?;
    println!("error: {}", read_point_cloud(&bad).unwrap_err());
    Ok(())
}
