//! Point cloud and mesh files: PLY (ascii and binary little-endian), OBJ and
//! whitespace-separated XYZ.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::mesh::{Mesh, PointCloud};

/// File format, chosen from the extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Ply,
    Obj,
    Xyz,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "ply" => Ok(Format::Ply),
            "obj" => Ok(Format::Obj),
            "xyz" | "txt" | "pts" => Ok(Format::Xyz),
            _ => Err(Error::Config(format!("{}: unknown file extension", path.display()))),
        }
    }
}

/// PLY body encoding for writers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Unit-normalizes normals, leaving ones already at unit length untouched so
/// written files read back bit-exactly. Returns `None` on a zero normal.
fn unit_normals(normals: Vec<Point3>) -> Option<Vec<Point3>> {
    normals
        .into_iter()
        .map(|n| {
            let len = geom::norm(n);
            if (len - 1.0).abs() <= 4.0 * f64::EPSILON {
                Some(n)
            } else {
                geom::normalize(n)
            }
        })
        .collect()
}

/// Last line of a file, where whole-file errors are reported.
fn last_line(bytes: &[u8]) -> usize {
    let breaks = bytes.iter().filter(|&&b| b == b'\n').count();
    let unterminated = usize::from(bytes.last().is_some_and(|&b| b != b'\n'));
    (breaks + unterminated).max(1)
}

fn finish_cloud(path: &Path, bytes: &[u8], points: Vec<Point3>, normals: Option<Vec<Point3>>) -> Result<PointCloud> {
    if points.is_empty() {
        return Err(parse_err(path, last_line(bytes), "no points"));
    }
    let normals = match normals {
        Some(n) if n.len() == points.len() => match unit_normals(n) {
            Some(n) => Some(n),
            None => {
                log::warn!("{}: zero-length normal found; normals dropped", path.display());
                None
            }
        },
        Some(_) => {
            log::warn!("{}: only some points carry normals; normals dropped", path.display());
            None
        }
        None => None,
    };
    Ok(PointCloud::from_parts(points, normals, false))
}

// ---------------------------------------------------------------- text helpers

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn text(path: &Path, bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|e| {
        let line = bytes[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        parse_err(path, line, "invalid UTF-8")
    })
}

// ---------------------------------------------------------------- XYZ

fn parse_xyz(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let src = text(path, bytes)?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| parse_f64(path, i + 1, t))
            .collect::<Result<Vec<_>>>()?;
        match vals.len() {
            3 => points.push([vals[0], vals[1], vals[2]]),
            6 => {
                points.push([vals[0], vals[1], vals[2]]);
                normals.push([vals[3], vals[4], vals[5]]);
            }
            n => return Err(parse_err(path, i + 1, format!("expected 3 or 6 values, found {n}"))),
        }
    }
    let normals = (!normals.is_empty()).then_some(normals);
    finish_cloud(path, bytes, points, normals)
}

fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.normals() {
            Some(n) => {
                let n = n[i];
                out.push_str(&format!("{} {} {} {} {} {}\n", p[0], p[1], p[2], n[0], n[1], n[2]));
            }
            None => out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2])),
        }
    }
    out
}

// ---------------------------------------------------------------- OBJ

struct ObjData {
    vertices: Vec<Point3>,
    normals: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

fn obj_index(path: &Path, line: usize, tok: &str, count: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let i: i64 = head
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad face index {tok:?}")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(parse_err(
            path,
            line,
            format!("face index {i} out of range ({count} vertices)"),
        ));
    }
    Ok(resolved as usize)
}

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<ObjData> {
    let src = text(path, bytes)?;
    let mut d = ObjData {
        vertices: Vec::new(),
        normals: Vec::new(),
        faces: Vec::new(),
    };
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        let xyz = |rest: &[&str]| -> Result<Point3> {
            if rest.len() < 3 {
                return Err(parse_err(path, i + 1, format!("{tag} needs three coordinates")));
            }
            Ok([
                parse_f64(path, i + 1, rest[0])?,
                parse_f64(path, i + 1, rest[1])?,
                parse_f64(path, i + 1, rest[2])?,
            ])
        };
        match tag {
            "v" => d.vertices.push(xyz(&rest)?),
            "vn" => d.normals.push(xyz(&rest)?),
            "f" => {
                if rest.len() != 3 {
                    return Err(parse_err(
                        path,
                        i + 1,
                        format!("only triangles are supported, found a {}-gon", rest.len()),
                    ));
                }
                let n = d.vertices.len();
                d.faces.push([
                    obj_index(path, i + 1, rest[0], n)?,
                    obj_index(path, i + 1, rest[1], n)?,
                    obj_index(path, i + 1, rest[2], n)?,
                ]);
            }
            _ => {}
        }
    }
    Ok(d)
}

fn write_obj_mesh(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 20);
    for p in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for f in mesh.faces() {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out
}

fn write_obj_cloud(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.points() {
        out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    if let Some(ns) = cloud.normals() {
        for n in ns {
            out.push_str(&format!("vn {} {} {}\n", n[0], n[1], n[2]));
        }
    }
    out
}

// ---------------------------------------------------------------- PLY

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Value(Scalar, String),
    List(Scalar, Scalar, String),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Default)]
struct PlyData {
    vertices: Vec<Point3>,
    normals: Option<Vec<Point3>>,
    faces: Vec<[usize; 3]>,
}

/// Reads values of one element record, from text tokens or binary bytes.
trait RecordSource {
    fn value(&mut self, ty: Scalar) -> Result<f64>;
    fn line(&self) -> usize;
    /// Called before each record.
    fn begin_record(&mut self) -> Result<()> {
        Ok(())
    }
    /// Called after the last record.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

struct TextSource<'a> {
    path: &'a Path,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    toks: Vec<&'a str>,
    pos: usize,
    /// Current line in the whole file.
    line: usize,
    /// Lines before the body.
    offset: usize,
}

impl RecordSource for TextSource<'_> {
    fn begin_record(&mut self) -> Result<()> {
        if self.pos < self.toks.len() {
            return Err(parse_err(self.path, self.line, "too many values in record"));
        }
        loop {
            let Some((i, l)) = self.lines.next() else {
                return Err(parse_err(self.path, self.line + 1, "unexpected end of file"));
            };
            self.line = self.offset + i + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                self.toks = t;
                self.pos = 0;
                return Ok(());
            }
        }
    }

    fn finish(&mut self) -> Result<()> {
        if self.pos < self.toks.len() {
            return Err(parse_err(self.path, self.line, "too many values in record"));
        }
        if let Some((i, _)) = self.lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(parse_err(self.path, self.offset + i + 1, "data after the last element"));
        }
        Ok(())
    }

    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let tok = *self
            .toks
            .get(self.pos)
            .ok_or_else(|| parse_err(self.path, self.line, "too few values in record"))?;
        self.pos += 1;
        let v = parse_f64(self.path, self.line, tok)?;
        if !matches!(ty, Scalar::F32 | Scalar::F64) && v.fract() != 0.0 {
            return Err(parse_err(
                self.path,
                self.line,
                format!("expected an integer, found {tok:?}"),
            ));
        }
        Ok(v)
    }
    fn line(&self) -> usize {
        self.line
    }
}

struct BinarySource<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
    header_lines: usize,
}

impl RecordSource for BinarySource<'_> {
    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(parse_err(
                self.path,
                self.header_lines,
                format!("binary body truncated at byte {}", self.pos),
            ));
        }
        let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        if !v.is_finite() {
            return Err(parse_err(
                self.path,
                self.header_lines,
                format!("non-finite value at byte {}", self.pos - n),
            ));
        }
        Ok(v)
    }
    fn line(&self) -> usize {
        self.header_lines
    }
}

fn read_elements(path: &Path, elements: &[Element], src: &mut dyn RecordSource) -> Result<PlyData> {
    let mut d = PlyData::default();
    let vertex_count = elements.iter().find(|e| e.name == "vertex").map_or(0, |e| e.count);
    for el in elements {
        let names: Vec<&str> = el
            .props
            .iter()
            .map(|p| match p {
                Property::Value(_, n) | Property::List(_, _, n) => n.as_str(),
            })
            .collect();
        let slot = |n: &str| names.iter().position(|&x| x == n);
        let xyz = [slot("x"), slot("y"), slot("z")];
        let nrm = [slot("nx"), slot("ny"), slot("nz")];
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(parse_err(path, src.line(), "vertex element lacks x, y or z"));
        }
        let has_normals = is_vertex && nrm.iter().all(Option::is_some);
        if has_normals {
            d.normals = Some(Vec::with_capacity(el.count));
        }
        for _ in 0..el.count {
            src.begin_record()?;
            let mut scalars = vec![0.0; el.props.len()];
            let mut face: Option<Vec<f64>> = None;
            for (k, p) in el.props.iter().enumerate() {
                match p {
                    Property::Value(ty, _) => scalars[k] = src.value(*ty)?,
                    Property::List(cty, ity, name) => {
                        let n = src.value(*cty)?;
                        if !(0.0..=1e6).contains(&n) {
                            return Err(parse_err(path, src.line(), format!("bad list length {n}")));
                        }
                        let vals = (0..n as usize).map(|_| src.value(*ity)).collect::<Result<Vec<_>>>()?;
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            face = Some(vals);
                        }
                    }
                }
            }
            if is_vertex {
                d.vertices.push(xyz.map(|s| scalars[s.unwrap()]));
                if let Some(ns) = d.normals.as_mut() {
                    ns.push(nrm.map(|s| scalars[s.unwrap()]));
                }
            }
            if let Some(f) = face {
                if f.len() != 3 {
                    return Err(parse_err(
                        path,
                        src.line(),
                        format!("only triangles are supported, found a {}-gon", f.len()),
                    ));
                }
                let idx = |v: f64| -> Result<usize> {
                    if v < 0.0 || v.fract() != 0.0 || v >= vertex_count as f64 {
                        return Err(parse_err(path, src.line(), format!("bad vertex index {v}")));
                    }
                    Ok(v as usize)
                };
                d.faces.push([idx(f[0])?, idx(f[1])?, idx(f[2])?]);
            }
        }
    }
    src.finish()?;
    Ok(d)
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PlyData> {
    // The header is ASCII and ends at the "end_header" line.
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .ok_or_else(|| parse_err(path, lines.len() + 1, "header is not terminated by end_header"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err(path, lines.len() + 1, "header is not ASCII"))?
            .trim_end_matches('\r')
            .to_string();
        pos = end + 1;
        let done = line.trim() == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines[0].trim() != "ply" {
        return Err(parse_err(path, 1, "missing ply magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, l) in lines.iter().enumerate().skip(1) {
        let t: Vec<&str> = l.split_whitespace().collect();
        let ln = i + 1;
        match t.first().copied() {
            Some("format") => {
                binary = Some(match t.get(1).copied() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    other => return Err(parse_err(path, ln, format!("unsupported format {other:?}"))),
                });
            }
            Some("comment") | Some("obj_info") | Some("end_header") | None => {}
            Some("element") => {
                if t.len() != 3 {
                    return Err(parse_err(path, ln, "element needs a name and a count"));
                }
                let count = t[2]
                    .parse()
                    .map_err(|_| parse_err(path, ln, format!("bad element count {:?}", t[2])))?;
                elements.push(Element {
                    name: t[1].to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, ln, "property before any element"))?;
                let ty = |s: &str| Scalar::parse(s).ok_or_else(|| parse_err(path, ln, format!("unknown type {s:?}")));
                let p = match t.get(1).copied() {
                    Some("list") if t.len() == 5 => Property::List(ty(t[2])?, ty(t[3])?, t[4].to_string()),
                    Some(s) if t.len() == 3 && s != "list" => Property::Value(ty(s)?, t[2].to_string()),
                    _ => return Err(parse_err(path, ln, "malformed property line")),
                };
                el.props.push(p);
            }
            Some(other) => return Err(parse_err(path, ln, format!("unknown header keyword {other:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, 2, "missing format line"))?;
    let header_lines = lines.len();
    if binary {
        let mut src = BinarySource {
            path,
            bytes: &bytes[pos..],
            pos: 0,
            header_lines,
        };
        let d = read_elements(path, &elements, &mut src)?;
        if src.pos != src.bytes.len() {
            return Err(parse_err(path, header_lines, "trailing bytes after the last element"));
        }
        Ok(d)
    } else {
        let body =
            std::str::from_utf8(&bytes[pos..]).map_err(|_| parse_err(path, header_lines + 1, "body is not ASCII"))?;
        let mut src = TextSource {
            path,
            lines: body.lines().enumerate().peekable(),
            toks: Vec::new(),
            pos: 0,
            line: header_lines,
            offset: header_lines,
        };
        read_elements(path, &elements, &mut src)
    }
}

fn ply_header(encoding: PlyEncoding, vertices: usize, normals: bool, faces: Option<usize>) -> String {
    let mut h = String::from("ply\n");
    h.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    h.push_str(&format!(
        "element vertex {vertices}\nproperty double x\nproperty double y\nproperty double z\n"
    ));
    if normals {
        h.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if let Some(f) = faces {
        h.push_str(&format!("element face {f}\nproperty list uchar int vertex_indices\n"));
    }
    h.push_str("end_header\n");
    h
}

fn write_ply(
    points: &[Point3],
    normals: Option<&[Point3]>,
    faces: Option<&[[usize; 3]]>,
    encoding: PlyEncoding,
) -> Vec<u8> {
    let mut out = ply_header(encoding, points.len(), normals.is_some(), faces.map(<[_]>::len)).into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut s = String::new();
            for (i, p) in points.iter().enumerate() {
                s.push_str(&format!("{} {} {}", p[0], p[1], p[2]));
                if let Some(n) = normals {
                    s.push_str(&format!(" {} {} {}", n[i][0], n[i][1], n[i][2]));
                }
                s.push('\n');
            }
            for f in faces.unwrap_or(&[]) {
                s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, p) in points.iter().enumerate() {
                for x in p {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                if let Some(n) = normals {
                    for x in n[i] {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
            for f in faces.unwrap_or(&[]) {
                out.push(3);
                for &v in f {
                    out.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- public API

/// Parses a point cloud from bytes; `path` names the source in errors.
pub fn parse_point_cloud(bytes: &[u8], format: Format, path: &Path) -> Result<PointCloud> {
    match format {
        Format::Xyz => parse_xyz(path, bytes),
        Format::Obj => {
            let d = parse_obj(path, bytes)?;
            let normals = (!d.normals.is_empty()).then_some(d.normals);
            finish_cloud(path, bytes, d.vertices, normals)
        }
        Format::Ply => {
            let d = parse_ply(path, bytes)?;
            finish_cloud(path, bytes, d.vertices, d.normals)
        }
    }
}

/// Parses a triangle mesh from bytes; `path` names the source in errors.
pub fn parse_mesh(bytes: &[u8], format: Format, path: &Path) -> Result<Mesh> {
    let (vertices, faces) = match format {
        Format::Obj => {
            let d = parse_obj(path, bytes)?;
            (d.vertices, d.faces)
        }
        Format::Ply => {
            let d = parse_ply(path, bytes)?;
            (d.vertices, d.faces)
        }
        Format::Xyz => return Err(Error::Config(format!("{}: XYZ files hold no faces", path.display()))),
    };
    if faces.is_empty() {
        return Err(parse_err(path, last_line(bytes), "mesh has no faces"));
    }
    Mesh::new(vertices, faces)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_point_cloud(&fs::read(path)?, Format::from_path(path)?, path)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    parse_mesh(&fs::read(path)?, Format::from_path(path)?, path)
}

/// Serializes a point cloud; floats are printed in shortest round-trip form.
pub fn encode_point_cloud(cloud: &PointCloud, format: Format, encoding: PlyEncoding) -> Vec<u8> {
    match format {
        Format::Xyz => write_xyz(cloud).into_bytes(),
        Format::Obj => write_obj_cloud(cloud).into_bytes(),
        Format::Ply => write_ply(cloud.points(), cloud.normals(), None, encoding),
    }
}

pub fn encode_mesh(mesh: &Mesh, format: Format, encoding: PlyEncoding) -> Result<Vec<u8>> {
    if mesh.face_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    match format {
        Format::Obj => Ok(write_obj_mesh(mesh).into_bytes()),
        Format::Ply => Ok(write_ply(mesh.vertices(), None, Some(mesh.faces()), encoding)),
        Format::Xyz => Err(Error::Config("XYZ files hold no faces".into())),
    }
}

pub fn write_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_point_cloud(cloud, Format::from_path(path)?, encoding))?;
    Ok(())
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mesh(mesh, Format::from_path(path)?, encoding)?)?;
    Ok(())
}

/// Name used in errors for in-memory sources.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn mem() -> PathBuf {
        memory_path()
    }

    #[test]
    fn ascii_ply_with_normals() {
        let src = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                   property float nx\nproperty float ny\nproperty float nz\nend_header\n\
                   0 0 0 0 0 2\n1 0 0 0 3 0\n0 1 0 1 0 0\n";
        let c = parse_point_cloud(src.as_bytes(), Format::Ply, &mem()).unwrap();
        assert_eq!(c.len(), 3);
        let n = c.normals().unwrap();
        assert_eq!(n, &[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn xyz_two_points() {
        let c = parse_point_cloud(b"0 0 0\n1 0 0", Format::Xyz, &mem()).unwrap();
        assert_eq!(c.points(), &[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(c.normals().is_none());
    }

    #[test]
    fn xyz_mixed_normals_dropped() {
        let c = parse_point_cloud(b"0 0 0 0 0 1\n1 0 0\n", Format::Xyz, &mem()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.normals().is_none());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_point_cloud(b"0 0 0\n1 x 0\n", Format::Xyz, &mem()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0\n";
        let e = parse_point_cloud(src.as_bytes(), Format::Ply, &mem()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 9, .. }), "{e}");
    }

    #[test]
    fn mesh_round_trips() {
        let m = fixtures::icosphere(2).transformed(|p| [p[0] * 0.1 + 1e-3, p[1] / 3.0, p[2]]);
        for (format, enc) in [
            (Format::Obj, PlyEncoding::Ascii),
            (Format::Ply, PlyEncoding::Ascii),
            (Format::Ply, PlyEncoding::BinaryLittleEndian),
        ] {
            let bytes = encode_mesh(&m, format, enc).unwrap();
            let back = parse_mesh(&bytes, format, &mem()).unwrap();
            assert_eq!(back, m, "{format:?} {enc:?}");
        }
    }

    #[test]
    fn cloud_round_trips() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let c = fixtures::sample_cloud(&fixtures::icosphere(2), 200, &mut rng);
        assert!(c.normals().is_some());
        for (format, enc) in [
            (Format::Xyz, PlyEncoding::Ascii),
            (Format::Obj, PlyEncoding::Ascii),
            (Format::Ply, PlyEncoding::Ascii),
            (Format::Ply, PlyEncoding::BinaryLittleEndian),
        ] {
            let bytes = encode_point_cloud(&c, format, enc);
            let back = parse_point_cloud(&bytes, format, &mem()).unwrap();
            assert_eq!(back, c, "{format:?} {enc:?}");
            assert_eq!(encode_point_cloud(&back, format, enc), bytes);
        }
    }

    #[test]
    fn polygons_and_empty_meshes_rejected() {
        let e = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", Format::Obj, &mem()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 5, .. }), "{e}");
        assert!(parse_mesh(b"v 0 0 0\n", Format::Obj, &mem()).is_err());
    }
}
