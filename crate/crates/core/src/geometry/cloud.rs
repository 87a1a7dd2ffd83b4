use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Surface point cloud with a kd-tree index for exact nearest-point queries.
#[derive(Debug, Clone)]
pub struct PointCloud {
    /// Points in tree order (object frame, meters).
    points: Vec<Vector3<f64>>,
    /// Original index of each tree-ordered point.
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    /// Points left of the split have `p[dim] <= value`, points right have
    /// `p[dim] >= value`.
    Split {
        dim: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

const LEAF_SIZE: usize = 8;

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("point cloud must not be empty".into()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("point cloud"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        build(&points, &mut order, 0, &mut nodes);
        Ok(PointCloud {
            points: order.iter().map(|&i| points[i as usize]).collect(),
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points in their original order.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); self.points.len()];
        for (p, &id) in self.points.iter().zip(&self.ids) {
            out[id as usize] = *p;
        }
        out
    }

    /// Exact nearest point: `(original index, point, distance)`. Ties go to
    /// the lowest original index.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, Vector3<f64>, f64) {
        let mut best = (f64::INFINITY, u32::MAX, 0usize);
        self.search(0, q, &mut best);
        (best.1 as usize, self.points[best.2], best.0.sqrt())
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut (f64, u32, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let d2 = (self.points[slot] - q).norm_squared();
                    let id = self.ids[slot];
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id, slot);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near as usize, q, best);
                // Equal distance still descends so ties resolve by index.
                if diff * diff <= best.0 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }

    /// Reads `x,y,z` rows (`.csv`/`.txt`) or little-endian `f32` triplets
    /// (any other extension).
    pub fn load(path: &Path) -> Result<Self> {
        let is_text = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("csv") | Some("txt")
        );
        let points = if is_text {
            read_csv(path)?
        } else {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() % 12 != 0 {
                return Err(Error::parse(
                    path,
                    "binary cloud length is not a multiple of 12 bytes",
                ));
            }
            bytes
                .chunks_exact(12)
                .map(|c| {
                    let f =
                        |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
                    Vector3::new(f(0), f(4), f(8))
                })
                .collect()
        };
        PointCloud::new(points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::parse(path, e))?;
        for p in self.points() {
            w.write_record(&[p.x.to_string(), p.y.to_string(), p.z.to_string()])
                .map_err(|e| Error::parse(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.len() != 3 {
            return Err(Error::parse(
                path,
                format!("row {}: expected 3 columns", line + 1),
            ));
        }
        let mut v = [0.0; 3];
        for (k, field) in record.iter().enumerate() {
            v[k] = field
                .parse()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
        }
        points.push(Vector3::from(v));
    }
    Ok(points)
}

/// Builds the subtree over `order[..]` (indices into `points`, permuted in
/// place into tree order). `offset` is the slice's position in the full
/// order. Returns the node index.
fn build(points: &[Vector3<f64>], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = points[order[0] as usize];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i as usize]);
        hi = hi.sup(&points[i as usize]);
    }
    let dim = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][dim].total_cmp(&points[b as usize][dim])
    });
    let value = points[order[mid] as usize][dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id as usize] = Node::Split {
        dim: dim as u8,
        value,
        left,
        right,
    };
    id
}
