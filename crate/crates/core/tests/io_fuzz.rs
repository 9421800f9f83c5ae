use std::path::Path;

use proptest::prelude::*;
use selfprior::fixtures;
use selfprior::io::{encode_mesh, encode_point_cloud, parse_mesh, parse_point_cloud, Format, PlyEncoding};
use selfprior::{Error, Mesh, PointCloud};

const FORMATS: [(Format, PlyEncoding); 4] = [
    (Format::Ply, PlyEncoding::Ascii),
    (Format::Ply, PlyEncoding::BinaryLittleEndian),
    (Format::Obj, PlyEncoding::Ascii),
    (Format::Xyz, PlyEncoding::Ascii),
];

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(-0.0), Just(1e-300)]
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    (prop::collection::vec([coord(), coord(), coord()], 1..40), any::<bool>()).prop_map(|(pts, with_normals)| {
        let cloud = PointCloud::new(pts.clone()).unwrap();
        if with_normals {
            let normals = pts.iter().map(|_| [0.0, 0.0, 1.0]).collect();
            cloud.with_normals(normals, true).unwrap()
        } else {
            cloud
        }
    })
}

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    (0usize..3, prop::collection::vec([coord(), coord(), coord()], 12)).prop_map(|(which, jitter)| {
        let base = match which {
            0 => fixtures::tetrahedron(),
            1 => fixtures::cube(),
            _ => fixtures::icosahedron(),
        };
        let vertices = base
            .vertices()
            .iter()
            .zip(jitter.iter().cycle())
            .map(|(p, j)| [p[0] + j[0] * 1e-3, p[1] + j[1] * 1e-3, p[2] + j[2] * 1e-3])
            .collect();
        Mesh::new(vertices, base.faces().to_vec()).unwrap()
    })
}

fn text_error_has_line(e: &Error) -> bool {
    match e {
        Error::Parse { line, .. } => *line > 0,
        _ => true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clouds_round_trip(cloud in cloud_strategy()) {
        for (format, enc) in FORMATS {
            if format == Format::Obj {
                continue;
            }
            let bytes = encode_point_cloud(&cloud, format, enc);
            let back = parse_point_cloud(&bytes, format, Path::new("fuzz")).unwrap();
            prop_assert_eq!(back.points(), cloud.points());
            prop_assert_eq!(back.normals(), cloud.normals());
        }
    }

    #[test]
    fn meshes_round_trip(mesh in mesh_strategy()) {
        for (format, enc) in FORMATS {
            if format == Format::Xyz {
                continue;
            }
            let bytes = encode_mesh(&mesh, format, enc).unwrap();
            let back = parse_mesh(&bytes, format, Path::new("fuzz")).unwrap();
            prop_assert_eq!(back.vertices(), mesh.vertices());
            prop_assert_eq!(back.faces(), mesh.faces());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        for (format, _) in FORMATS {
            if let Err(e) = parse_point_cloud(&bytes, format, Path::new("fuzz")) {
                prop_assert!(text_error_has_line(&e));
            }
            let _ = parse_mesh(&bytes, format, Path::new("fuzz"));
        }
    }

    #[test]
    fn damaged_files_fail_cleanly(mesh in mesh_strategy(), cut in 0.0..1.0f64, flip in any::<(usize, u8)>()) {
        for (format, enc) in FORMATS {
            if format == Format::Xyz {
                continue;
            }
            let bytes = encode_mesh(&mesh, format, enc).unwrap();
            let truncated = &bytes[..(cut * bytes.len() as f64) as usize];
            if let Err(e) = parse_mesh(truncated, format, Path::new("fuzz")) {
                prop_assert!(text_error_has_line(&e), "{}", e);
            }
            let mut flipped = bytes.clone();
            let at = flip.0 % flipped.len();
            flipped[at] ^= flip.1;
            if let Err(e) = parse_mesh(&flipped, format, Path::new("fuzz")) {
                prop_assert!(text_error_has_line(&e), "{}", e);
            }
        }
    }
}
