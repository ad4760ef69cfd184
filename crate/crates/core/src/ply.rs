//! PLY reader/writer for point clouds and triangle meshes.
//!
//! Supports ASCII and binary little-endian files with the vertex properties
//! x/y/z, nx/ny/nz, red/green/blue and a face list property.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str, line: usize) -> Result<ScalarType> {
        Ok(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown ply type '{other}'"),
                })
            }
        })
    }

    fn read_binary(self, r: &mut impl Read) -> Result<f64> {
        Ok(match self {
            ScalarType::I8 => r.read_i8()? as f64,
            ScalarType::U8 => r.read_u8()? as f64,
            ScalarType::I16 => r.read_i16::<LittleEndian>()? as f64,
            ScalarType::U16 => r.read_u16::<LittleEndian>()? as f64,
            ScalarType::I32 => r.read_i32::<LittleEndian>()? as f64,
            ScalarType::U32 => r.read_u32::<LittleEndian>()? as f64,
            ScalarType::F32 => r.read_f32::<LittleEndian>()? as f64,
            ScalarType::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List {
        #[allow(dead_code)]
        name: String,
        count_ty: ScalarType,
        item_ty: ScalarType,
    },
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<ElementDef>,
    header_lines: usize,
}

fn parse_header(reader: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut lineno = 0;
    let read_line = |reader: &mut dyn BufRead, line: &mut String, lineno: &mut usize| -> Result<()> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(Error::Parse {
                line: *lineno,
                msg: "unexpected end of header".into(),
            });
        }
        *lineno += 1;
        Ok(())
    };

    read_line(reader, &mut line, &mut lineno)?;
    if line.trim() != "ply" {
        return Err(Error::Parse {
            line: 1,
            msg: "missing 'ply' magic".into(),
        });
    }

    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        read_line(reader, &mut line, &mut lineno)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => continue,
            ["end_header"] => break,
            ["format", fmt, _version] => {
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("unsupported ply format '{other}'"),
                        })
                    }
                });
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad element count '{count}'"),
                })?;
                elements.push(ElementDef {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements.last_mut().ok_or(Error::Parse {
                    line: lineno,
                    msg: "property before element".into(),
                })?;
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count_ty: ScalarType::parse(count_ty, lineno)?,
                    item_ty: ScalarType::parse(item_ty, lineno)?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or(Error::Parse {
                    line: lineno,
                    msg: "property before element".into(),
                })?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: ScalarType::parse(ty, lineno)?,
                });
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unrecognized header line: {}", line.trim()),
                })
            }
        }
    }
    Ok(Header {
        format: format.ok_or(Error::Parse {
            line: lineno,
            msg: "missing format line".into(),
        })?,
        elements,
        header_lines: lineno,
    })
}

struct VertexData {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3<f64>>>,
    colors: Option<Vec<[f64; 3]>>,
}

struct Parsed {
    vertices: VertexData,
    faces: Vec<[u32; 3]>,
}

fn parse_body(header: &Header, reader: &mut impl BufRead) -> Result<Parsed> {
    let mut vertices = VertexData {
        points: Vec::new(),
        normals: None,
        colors: None,
    };
    let mut faces = Vec::new();
    let mut lineno = header.header_lines;

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        // Column positions of the interesting vertex properties.
        let col = |n: &str| {
            el.properties.iter().position(|p| match p {
                Property::Scalar { name, .. } => name == n,
                _ => false,
            })
        };
        let (cx, cy, cz) = (col("x"), col("y"), col("z"));
        let (cnx, cny, cnz) = (col("nx"), col("ny"), col("nz"));
        let (cr, cg, cb) = (col("red"), col("green"), col("blue"));
        if is_vertex {
            if cx.is_none() || cy.is_none() || cz.is_none() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "vertex element missing x/y/z".into(),
                });
            }
            vertices.points.reserve(el.count);
            if cnx.is_some() && cny.is_some() && cnz.is_some() {
                vertices.normals = Some(Vec::with_capacity(el.count));
            }
            if cr.is_some() && cg.is_some() && cb.is_some() {
                vertices.colors = Some(Vec::with_capacity(el.count));
            }
        }

        let mut scalars = Vec::with_capacity(el.properties.len());
        let mut list = Vec::new();
        for _ in 0..el.count {
            scalars.clear();
            list.clear();
            match header.format {
                PlyFormat::Ascii => {
                    let mut line = String::new();
                    if reader.read_line(&mut line)? == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "unexpected end of file".into(),
                        });
                    }
                    lineno += 1;
                    let mut toks = line.split_whitespace();
                    let mut next = |lineno: usize| -> Result<f64> {
                        toks.next()
                            .ok_or(Error::Parse {
                                line: lineno,
                                msg: "missing value".into(),
                            })?
                            .parse()
                            .map_err(|e| Error::Parse {
                                line: lineno,
                                msg: format!("bad number: {e}"),
                            })
                    };
                    for p in &el.properties {
                        match p {
                            Property::Scalar { .. } => scalars.push(next(lineno)?),
                            Property::List { .. } => {
                                let n = next(lineno)? as usize;
                                scalars.push(f64::NAN);
                                for _ in 0..n {
                                    list.push(next(lineno)?);
                                }
                            }
                        }
                    }
                }
                PlyFormat::BinaryLittleEndian => {
                    for p in &el.properties {
                        match p {
                            Property::Scalar { ty, .. } => {
                                scalars.push(ty.read_binary(reader)?)
                            }
                            Property::List { count_ty, item_ty, .. } => {
                                let n = count_ty.read_binary(reader)? as usize;
                                scalars.push(f64::NAN);
                                for _ in 0..n {
                                    list.push(item_ty.read_binary(reader)?);
                                }
                            }
                        }
                    }
                }
            }

            if is_vertex {
                vertices.points.push(Point3::new(
                    scalars[cx.unwrap()],
                    scalars[cy.unwrap()],
                    scalars[cz.unwrap()],
                ));
                if let Some(ns) = &mut vertices.normals {
                    ns.push(Vector3::new(
                        scalars[cnx.unwrap()],
                        scalars[cny.unwrap()],
                        scalars[cnz.unwrap()],
                    ));
                }
                if let Some(cs) = &mut vertices.colors {
                    cs.push([
                        scalars[cr.unwrap()] / 255.0,
                        scalars[cg.unwrap()] / 255.0,
                        scalars[cb.unwrap()] / 255.0,
                    ]);
                }
            } else if is_face {
                if list.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("only triangle faces supported, got {}", list.len()),
                    });
                }
                faces.push([list[0] as u32, list[1] as u32, list[2] as u32]);
            }
        }
    }
    Ok(Parsed { vertices, faces })
}

fn parse_file(path: &Path) -> Result<Parsed> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = parse_header(&mut reader)?;
    parse_body(&header, &mut reader)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let parsed = parse_file(path.as_ref())?;
    let cloud = PointCloud {
        points: parsed.vertices.points,
        normals: parsed.vertices.normals,
        colors: parsed.vertices.colors,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let parsed = parse_file(path.as_ref())?;
    let mesh = TriangleMesh {
        vertices: parsed.vertices.points,
        faces: parsed.faces,
        vertex_normals: parsed.vertices.normals,
        vertex_colors: parsed.vertices.colors,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn write_header(
    w: &mut impl Write,
    format: PlyFormat,
    n_vertices: usize,
    n_faces: Option<usize>,
    has_normals: bool,
    has_colors: bool,
) -> Result<()> {
    writeln!(w, "ply")?;
    match format {
        PlyFormat::Ascii => writeln!(w, "format ascii 1.0")?,
        PlyFormat::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0")?,
    }
    writeln!(w, "element vertex {n_vertices}")?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if has_normals {
        writeln!(w, "property float nx")?;
        writeln!(w, "property float ny")?;
        writeln!(w, "property float nz")?;
    }
    if has_colors {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    if let Some(n) = n_faces {
        writeln!(w, "element face {n}")?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

fn write_vertex(
    w: &mut impl Write,
    format: PlyFormat,
    p: Point3,
    n: Option<Vector3<f64>>,
    c: Option<[f64; 3]>,
) -> Result<()> {
    match format {
        PlyFormat::Ascii => {
            write!(w, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
            if let Some(n) = n {
                write!(w, " {} {} {}", n.x as f32, n.y as f32, n.z as f32)?;
            }
            if let Some(c) = c {
                write!(
                    w,
                    " {} {} {}",
                    (c[0] * 255.0).round() as u8,
                    (c[1] * 255.0).round() as u8,
                    (c[2] * 255.0).round() as u8
                )?;
            }
            writeln!(w)?;
        }
        PlyFormat::BinaryLittleEndian => {
            w.write_f32::<LittleEndian>(p.x as f32)?;
            w.write_f32::<LittleEndian>(p.y as f32)?;
            w.write_f32::<LittleEndian>(p.z as f32)?;
            if let Some(n) = n {
                w.write_f32::<LittleEndian>(n.x as f32)?;
                w.write_f32::<LittleEndian>(n.y as f32)?;
                w.write_f32::<LittleEndian>(n.z as f32)?;
            }
            if let Some(c) = c {
                w.write_u8((c[0] * 255.0).round() as u8)?;
                w.write_u8((c[1] * 255.0).round() as u8)?;
                w.write_u8((c[2] * 255.0).round() as u8)?;
            }
        }
    }
    Ok(())
}

pub fn write_point_cloud(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    format: PlyFormat,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        format,
        cloud.points.len(),
        None,
        cloud.normals.is_some(),
        cloud.colors.is_some(),
    )?;
    for (i, &p) in cloud.points.iter().enumerate() {
        let n = cloud.normals.as_ref().map(|ns| ns[i]);
        let c = cloud.colors.as_ref().map(|cs| cs[i]);
        write_vertex(&mut w, format, p, n, c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(
        &mut w,
        format,
        mesh.vertices.len(),
        Some(mesh.faces.len()),
        mesh.vertex_normals.is_some(),
        mesh.vertex_colors.is_some(),
    )?;
    for (i, &p) in mesh.vertices.iter().enumerate() {
        let n = mesh.vertex_normals.as_ref().map(|ns| ns[i]);
        let c = mesh.vertex_colors.as_ref().map(|cs| cs[i]);
        write_vertex(&mut w, format, p, n, c)?;
    }
    for f in &mesh.faces {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
            PlyFormat::BinaryLittleEndian => {
                w.write_u8(3)?;
                w.write_i32::<LittleEndian>(f[0] as i32)?;
                w.write_i32::<LittleEndian>(f[1] as i32)?;
                w.write_i32::<LittleEndian>(f[2] as i32)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_mesh() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(1.0, 1.0, 0.5),
            ],
            faces: vec![[0, 1, 2], [1, 3, 2]],
            vertex_normals: Some(vec![Vector3::new(0.0, 0.0, 1.0); 4]),
            vertex_colors: Some(vec![[1.0, 0.0, 0.0]; 4]),
        }
    }

    #[test]
    fn mesh_round_trip_both_formats() {
        let dir = tempdir().unwrap();
        let mesh = sample_mesh();
        for (fname, fmt) in [
            ("a.ply", PlyFormat::Ascii),
            ("b.ply", PlyFormat::BinaryLittleEndian),
        ] {
            let path = dir.path().join(fname);
            write_mesh(&path, &mesh, fmt).unwrap();
            let back = read_mesh(&path).unwrap();
            assert_eq!(back.faces, mesh.faces);
            assert_eq!(back.vertices.len(), mesh.vertices.len());
            for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
                assert!(a.dist(*b) < 1e-6);
            }
            assert!(back.vertex_normals.is_some());
            assert!(back.vertex_colors.is_some());
        }
    }

    #[test]
    fn cloud_round_trip() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud {
            points: vec![Point3::new(0.5, -0.25, 2.0), Point3::new(1.0, 2.0, 3.0)],
            normals: Some(vec![
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(1.0, 0.0, 0.0),
            ]),
            colors: None,
        };
        let path = dir.path().join("c.ply");
        write_point_cloud(&path, &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        let back = read_point_cloud(&path).unwrap();
        assert_eq!(back.points.len(), 2);
        assert!(back.points[0].dist(cloud.points[0]) < 1e-6);
        assert!(back.colors.is_none());
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "not a ply file\n").unwrap();
        assert!(matches!(read_mesh(&path), Err(Error::Parse { .. })));
    }
}
