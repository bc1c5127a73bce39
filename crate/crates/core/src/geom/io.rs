//! OBJ and PLY reading/writing plus the `.labels` sidecar (one class id per
//! line, line i = face i).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::mesh::TriangleMesh;
use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Loads an OBJ or PLY mesh. Polygons are fan-triangulated. Face labels come
/// from a `<stem>.labels` sidecar when one exists, else from a PLY face `label`
/// property.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, polygons, mut face_labels) = match extension(path).as_str() {
        "obj" => {
            let (v, f) = parse_obj(&bytes, path)?;
            (v, f, None)
        }
        "ply" => {
            let ply = parse_ply(&bytes, path)?;
            (ply.vertices, ply.faces, ply.face_labels)
        }
        other => {
            return Err(Error::format(
                path.display().to_string(),
                format!("unsupported mesh extension `{other}` (expected obj or ply)"),
            ))
        }
    };
    let mut faces = Vec::with_capacity(polygons.len());
    let mut expanded_labels = face_labels.as_ref().map(|_| Vec::new());
    for (pi, poly) in polygons.iter().enumerate() {
        if poly.len() < 3 {
            return Err(Error::Validation(format!(
                "face {pi} has {} vertices; at least 3 are required",
                poly.len()
            )));
        }
        for k in 1..poly.len() - 1 {
            faces.push([poly[0], poly[k], poly[k + 1]]);
            if let (Some(out), Some(src)) = (expanded_labels.as_mut(), face_labels.as_ref()) {
                out.push(src[pi]);
            }
        }
    }
    face_labels = expanded_labels;
    let sidecar = labels_path(path);
    if sidecar.exists() {
        face_labels = Some(read_labels(&sidecar)?);
    }
    TriangleMesh::new(vertices, faces, face_labels)
}

/// Point positions with optional per-point labels.
pub type LabeledPoints = (Vec<[f32; 3]>, Option<Vec<u32>>);

/// Vertex positions (and optional per-vertex `label`) of a PLY or OBJ file.
pub fn load_points(path: impl AsRef<Path>) -> Result<LabeledPoints> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, labels) = match extension(path).as_str() {
        "obj" => (parse_obj(&bytes, path)?.0, None),
        "ply" => {
            let ply = parse_ply(&bytes, path)?;
            (ply.vertices, ply.vertex_labels)
        }
        other => {
            return Err(Error::format(
                path.display().to_string(),
                format!("unsupported point file extension `{other}`"),
            ))
        }
    };
    let points = vertices
        .into_iter()
        .map(|v| [v[0] as f32, v[1] as f32, v[2] as f32])
        .collect();
    Ok((points, labels))
}

/// The sidecar path for a mesh: same stem, `.labels` extension.
pub fn labels_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension("labels")
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse::<u32>().map_err(|_| {
            Error::format(
                format!("{}:{}", path.display(), i + 1),
                format!("expected a non-negative integer label, found `{t}`"),
            )
        })?);
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a binary little-endian PLY with faces. Face labels, when present, are
/// written as a face `label` property; `vertex_labels` as a vertex `label`.
pub fn write_mesh_ply(
    path: impl AsRef<Path>,
    mesh: &TriangleMesh,
    vertex_labels: Option<&[u32]>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!(
        "element vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        mesh.vertices.len()
    );
    if vertex_labels.is_some() {
        header += "property int label\n";
    }
    header += &format!(
        "element face {}\nproperty list uchar int vertex_indices\n",
        mesh.faces.len()
    );
    if mesh.face_labels.is_some() {
        header += "property int label\n";
    }
    header += "end_header\n";
    w.write_all(header.as_bytes()).map_err(io)?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v {
            w.write_all(&(*c as f32).to_le_bytes()).map_err(io)?;
        }
        if let Some(l) = vertex_labels {
            w.write_all(&(l[i] as i32).to_le_bytes()).map_err(io)?;
        }
    }
    for (i, f) in mesh.faces.iter().enumerate() {
        w.write_all(&[3u8]).map_err(io)?;
        for idx in f {
            w.write_all(&(*idx as i32).to_le_bytes()).map_err(io)?;
        }
        if let Some(l) = &mesh.face_labels {
            w.write_all(&(l[i] as i32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes a vertex-only binary PLY point cloud with an optional `label` property.
pub fn write_points_ply(
    path: impl AsRef<Path>,
    points: &[[f32; 3]],
    labels: Option<&[u32]>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        points.len()
    );
    if labels.is_some() {
        header += "property int label\n";
    }
    header += "end_header\n";
    w.write_all(header.as_bytes()).map_err(io)?;
    for (i, p) in points.iter().enumerate() {
        for c in p {
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
        if let Some(l) = labels {
            w.write_all(&(l[i] as i32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

type Polygons = Vec<Vec<u32>>;

fn parse_obj(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Polygons)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("{} byte {}", path.display(), e.valid_up_to()), "invalid UTF-8"))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let loc = || format!("{}:{}", path.display(), ln + 1);
        let line = line.split('#').next().unwrap_or("");
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let tok = it
                        .next()
                        .ok_or_else(|| Error::format(loc(), "vertex needs three coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| Error::format(loc(), format!("bad coordinate `{tok}`")))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| Error::format(loc(), format!("bad face index `{tok}`")))?;
                    let resolved = match idx {
                        0 => return Err(Error::format(loc(), "OBJ indices start at 1")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::Validation(format!(
                            "{}: face index {idx} out of range ({} vertices so far)",
                            loc(),
                            vertices.len()
                        )));
                    }
                    poly.push(resolved as u32);
                }
                faces.push(poly);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Single(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Default)]
struct PlyContents {
    vertices: Vec<Vec3>,
    vertex_labels: Option<Vec<u32>>,
    faces: Polygons,
    face_labels: Option<Vec<u32>>,
}

/// Values of one element instance: scalars by property position, lists separately.
struct Record {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

fn parse_ply(bytes: &[u8], path: &Path) -> Result<PlyContents> {
    let name = path.display().to_string();
    let (header_end, binary, elements) = parse_ply_header(bytes, &name)?;
    let mut out = PlyContents::default();
    let body = &bytes[header_end..];
    let mut cursor = PlyCursor {
        body,
        pos: 0,
        base: header_end,
        binary,
        line: header_lines(bytes, header_end),
        name: &name,
        text: if binary { None } else { Some(ascii_lines(body)) },
        text_idx: 0,
    };
    for el in &elements {
        let layout = Layout::of(el);
        for i in 0..el.count {
            let rec = cursor.read_record(el).map_err(|e| match e {
                CursorError::Eof => Error::Validation(format!(
                    "{name}: header declares {} `{}` elements but the data ends after {i}",
                    el.count, el.name
                )),
                CursorError::Parse(e) => e,
            })?;
            match el.name.as_str() {
                "vertex" => {
                    let (Some(x), Some(y), Some(z)) = (layout.x, layout.y, layout.z) else {
                        return Err(Error::format(&name, "vertex element lacks x/y/z"));
                    };
                    out.vertices
                        .push([rec.scalars[x], rec.scalars[y], rec.scalars[z]]);
                    if let Some(l) = layout.label {
                        out.vertex_labels
                            .get_or_insert_with(Vec::new)
                            .push(to_label(rec.scalars[l], &name)?);
                    }
                }
                "face" => {
                    let Some(li) = layout.indices else {
                        return Err(Error::format(&name, "face element lacks vertex_indices"));
                    };
                    let mut poly = Vec::with_capacity(rec.lists[li].len());
                    for &v in &rec.lists[li] {
                        if v < 0.0 || v as usize >= out.vertices.len() {
                            return Err(Error::Validation(format!(
                                "{name}: face {i} references vertex {v} but there are {} vertices",
                                out.vertices.len()
                            )));
                        }
                        poly.push(v as u32);
                    }
                    out.faces.push(poly);
                    if let Some(l) = layout.label {
                        out.face_labels
                            .get_or_insert_with(Vec::new)
                            .push(to_label(rec.scalars[l], &name)?);
                    }
                }
                _ => {}
            }
        }
    }
    if cursor.has_trailing_data() {
        return Err(Error::Validation(format!(
            "{name}: data continues past the element counts declared in the header"
        )));
    }
    Ok(out)
}

fn to_label(v: f64, name: &str) -> Result<u32> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Validation(format!("{name}: invalid label {v}")));
    }
    Ok(v as u32)
}

/// Positions of interesting properties inside a record.
struct Layout {
    x: Option<usize>,
    y: Option<usize>,
    z: Option<usize>,
    label: Option<usize>,
    indices: Option<usize>,
}

impl Layout {
    fn of(el: &Element) -> Self {
        let mut l = Layout {
            x: None,
            y: None,
            z: None,
            label: None,
            indices: None,
        };
        let (mut si, mut li) = (0, 0);
        for p in &el.properties {
            match p {
                Property::Single(n, _) => {
                    match n.as_str() {
                        "x" => l.x = Some(si),
                        "y" => l.y = Some(si),
                        "z" => l.z = Some(si),
                        "label" => l.label = Some(si),
                        _ => {}
                    }
                    si += 1;
                }
                Property::List(n, _, _) => {
                    if n == "vertex_indices" || n == "vertex_index" {
                        l.indices = Some(li);
                    }
                    li += 1;
                }
            }
        }
        l
    }
}

fn parse_ply_header(bytes: &[u8], name: &str) -> Result<(usize, bool, Vec<Element>)> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut elements: Vec<Element> = Vec::new();
    let mut binary = None;
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::format(format!("{name}:{}", line_no + 1), "header has no end_header"));
        };
        let raw = &bytes[pos..pos + nl];
        line_no += 1;
        let loc = format!("{name}:{line_no}");
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::format(&loc, "header is not valid text"))?
            .trim();
        pos += nl + 1;
        if line_no == 1 {
            if line != "ply" {
                return Err(Error::format(loc, "missing `ply` magic"));
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, ..] => {
                return Err(Error::format(loc, format!("unsupported PLY format `{other}`")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", el, count] => elements.push(Element {
                name: el.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(&loc, format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ct, it, pname] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(&loc, "property before any element"))?;
                let (Some(c), Some(i)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::format(&loc, "unknown list property type"));
                };
                el.properties.push(Property::List(pname.to_string(), c, i));
            }
            ["property", ty, pname] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(&loc, "property before any element"))?;
                let t = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(&loc, format!("unknown property type `{ty}`")))?;
                el.properties.push(Property::Single(pname.to_string(), t));
            }
            ["end_header"] => break,
            _ => return Err(Error::format(loc, format!("unrecognized header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| Error::format(name, "header lacks a format line"))?;
    Ok((pos, binary, elements))
}

fn header_lines(bytes: &[u8], end: usize) -> usize {
    bytes[..end].iter().filter(|&&b| b == b'\n').count()
}

fn ascii_lines(body: &[u8]) -> Vec<(usize, String)> {
    String::from_utf8_lossy(body)
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i, l.to_string()))
        .collect()
}

enum CursorError {
    Eof,
    Parse(Error),
}

struct PlyCursor<'a> {
    body: &'a [u8],
    pos: usize,
    base: usize,
    binary: bool,
    line: usize,
    name: &'a str,
    text: Option<Vec<(usize, String)>>,
    text_idx: usize,
}

impl PlyCursor<'_> {
    fn read_record(&mut self, el: &Element) -> std::result::Result<Record, CursorError> {
        if self.binary {
            self.read_binary(el)
        } else {
            self.read_ascii(el)
        }
    }

    fn take(&mut self, t: Scalar) -> std::result::Result<f64, CursorError> {
        let n = t.size();
        if self.pos + n > self.body.len() {
            return Err(CursorError::Eof);
        }
        let v = t.read_le(&self.body[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }

    fn read_binary(&mut self, el: &Element) -> std::result::Result<Record, CursorError> {
        let mut rec = Record {
            scalars: Vec::new(),
            lists: Vec::new(),
        };
        for p in &el.properties {
            match p {
                Property::Single(_, t) => rec.scalars.push(self.take(*t)?),
                Property::List(_, ct, it) => {
                    let at = self.base + self.pos;
                    let count = self.take(*ct)?;
                    if !(0.0..=1e6).contains(&count) {
                        return Err(CursorError::Parse(Error::format(
                            format!("{} byte {at}", self.name),
                            format!("implausible list length {count}"),
                        )));
                    }
                    let list = (0..count as usize)
                        .map(|_| self.take(*it))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    rec.lists.push(list);
                }
            }
        }
        Ok(rec)
    }

    fn read_ascii(&mut self, el: &Element) -> std::result::Result<Record, CursorError> {
        let lines = self.text.as_ref().expect("ascii body");
        let Some((li, line)) = lines.get(self.text_idx) else {
            return Err(CursorError::Eof);
        };
        self.text_idx += 1;
        let loc = format!("{}:{}", self.name, self.line + li + 1);
        let mut toks = line.split_whitespace();
        let mut next = |what: &str| -> std::result::Result<f64, CursorError> {
            let tok = toks.next().ok_or_else(|| {
                CursorError::Parse(Error::format(&loc, format!("missing {what}")))
            })?;
            tok.parse::<f64>().map_err(|_| {
                CursorError::Parse(Error::format(&loc, format!("bad number `{tok}`")))
            })
        };
        let mut rec = Record {
            scalars: Vec::new(),
            lists: Vec::new(),
        };
        for p in &el.properties {
            match p {
                Property::Single(n, _) => rec.scalars.push(next(n)?),
                Property::List(n, _, _) => {
                    let count = next(n)?;
                    let list = (0..count.max(0.0) as usize)
                        .map(|_| next(n))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    rec.lists.push(list);
                }
            }
        }
        Ok(rec)
    }

    fn has_trailing_data(&self) -> bool {
        match &self.text {
            Some(lines) => self.text_idx < lines.len(),
            None => self.pos < self.body.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, contents: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn single_triangle_obj() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.obj", b"# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert!(m.face_labels.is_none());
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "q.obj",
            b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n",
        );
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_negative_indices_and_bad_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.obj", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
        assert_eq!(load_mesh(&p).unwrap().faces, vec![[0, 1, 2]]);
        let p = write(dir.path(), "b.obj", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
        assert!(matches!(load_mesh(&p), Err(Error::Validation(_))));
        let p = write(dir.path(), "c.obj", b"v 0 0 zero\n");
        match load_mesh(&p) {
            Err(Error::Format { location, .. }) => assert!(location.ends_with(":1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ascii_ply_face_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.ply",
            b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
        );
        assert!(matches!(load_mesh(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn ascii_ply_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.ply",
            b"ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nproperty int label\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3 7\n",
        );
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces.len(), 2);
        assert_eq!(m.face_labels, Some(vec![7, 7]));
    }

    #[test]
    fn binary_roundtrip_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            Some(vec![1, 2]),
        )
        .unwrap();
        let p = dir.path().join("m.ply");
        write_mesh_ply(&p, &mesh, None).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back, mesh);
        write_labels(labels_path(&p), &[4, 5]).unwrap();
        assert_eq!(load_mesh(&p).unwrap().face_labels, Some(vec![4, 5]));
    }

    #[test]
    fn truncated_binary_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.ply");
        write_points_ply(&p, &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], Some(&[0, 1])).unwrap();
        let (pts, labels) = load_points(&p).unwrap();
        assert_eq!(pts, vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(labels, Some(vec![0, 1]));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_points(&p), Err(Error::Validation(_))));
    }
}
