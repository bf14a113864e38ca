//! Antenna array layouts and translation-equivalence classes of antenna pairs.
//!
//! UPA antennas are numbered column-major on an `M x N` grid (`M` antennas per
//! column, `N` per row): antenna `p` sits at `x = p / M`, `y = p % M`, and the
//! inverse is `p = x * M + y`. A ULA is the `M = 1` case.
//!
//! Two ordered pairs `(p, q)` and `(p', q')` are equivalent when one is a
//! translation of the other, i.e. `coord(q) - coord(p) == coord(q') - coord(p')`.
//! Rotations are not equivalences: horizontal and vertical spreads differ.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{CovError, Result};

/// Lattice position of an antenna. `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntennaCoord {
    pub x: i32,
    pub y: i32,
}

impl AntennaCoord {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Displacement `coord(q) - coord(p)` of an ordered antenna pair.
pub type Displacement = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    Ula,
    Upa,
    Generic,
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::Ula => "ula",
            LayoutKind::Upa => "upa",
            LayoutKind::Generic => "generic",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Shape {
    Ula { nt: usize },
    Upa { rows: usize, cols: usize },
    Generic { coords: Vec<AntennaCoord>, lookup: HashMap<AntennaCoord, usize> },
}

/// Geometry of a base-station array.
#[derive(Clone, Debug)]
pub struct AntennaLayout {
    shape: Shape,
    partition: OnceLock<Arc<PairPartition>>,
}

impl PartialEq for AntennaLayout {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

impl Eq for AntennaLayout {}

impl AntennaLayout {
    fn from_shape(shape: Shape) -> Self {
        Self {
            shape,
            partition: OnceLock::new(),
        }
    }

    pub fn ula(nt: usize) -> Result<Self> {
        if nt == 0 {
            return Err(CovError::InvalidLayout("ULA needs at least one antenna".into()));
        }
        Ok(Self::from_shape(Shape::Ula { nt }))
    }

    /// `rows` antennas per column (M) and `cols` antennas per row (N).
    pub fn upa(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CovError::InvalidLayout(format!(
                "UPA dimensions must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self::from_shape(Shape::Upa { rows, cols }))
    }

    /// UPA with `nt` antennas and `rows` per column; `rows` must divide `nt`.
    pub fn upa_with_rows(nt: usize, rows: usize) -> Result<Self> {
        if rows == 0 || nt == 0 || nt % rows != 0 {
            return Err(CovError::InvalidLayout(format!(
                "UPA rows {rows} must divide antenna count {nt}"
            )));
        }
        Self::upa(rows, nt / rows)
    }

    /// Near-square UPA: the largest divisor of `nt` not exceeding `sqrt(nt)`
    /// is used as the row count, so 128 antennas become an 8x16 panel.
    pub fn upa_near_square(nt: usize) -> Result<Self> {
        if nt == 0 {
            return Err(CovError::InvalidLayout("UPA needs at least one antenna".into()));
        }
        let rows = (1..=nt)
            .take_while(|m| m * m <= nt)
            .filter(|m| nt % m == 0)
            .last()
            .unwrap_or(1);
        Self::upa_with_rows(nt, rows)
    }

    /// Arbitrary lattice layout; coordinates must be distinct.
    pub fn generic(coords: Vec<AntennaCoord>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CovError::InvalidLayout("layout has no antennas".into()));
        }
        let mut lookup = HashMap::with_capacity(coords.len());
        for (i, &c) in coords.iter().enumerate() {
            if lookup.insert(c, i).is_some() {
                return Err(CovError::DuplicateCoordinate { x: c.x, y: c.y });
            }
        }
        Ok(Self::from_shape(Shape::Generic { coords, lookup }))
    }

    pub fn kind(&self) -> LayoutKind {
        match self.shape {
            Shape::Ula { .. } => LayoutKind::Ula,
            Shape::Upa { .. } => LayoutKind::Upa,
            Shape::Generic { .. } => LayoutKind::Generic,
        }
    }

    pub fn nt(&self) -> usize {
        match &self.shape {
            Shape::Ula { nt } => *nt,
            Shape::Upa { rows, cols } => rows * cols,
            Shape::Generic { coords, .. } => coords.len(),
        }
    }

    /// Antennas per column (M). A ULA has one; generic layouts report `None`.
    pub fn rows(&self) -> Option<usize> {
        match self.shape {
            Shape::Ula { .. } => Some(1),
            Shape::Upa { rows, .. } => Some(rows),
            Shape::Generic { .. } => None,
        }
    }

    /// Antennas per row (N).
    pub fn cols(&self) -> Option<usize> {
        match self.shape {
            Shape::Ula { nt } => Some(nt),
            Shape::Upa { cols, .. } => Some(cols),
            Shape::Generic { .. } => None,
        }
    }

    pub fn index_to_coord(&self, p: usize) -> Result<AntennaCoord> {
        let nt = self.nt();
        if p >= nt {
            return Err(CovError::IndexOutOfRange { index: p, nt });
        }
        Ok(match &self.shape {
            Shape::Ula { .. } => AntennaCoord::new(p as i32, 0),
            Shape::Upa { rows, .. } => AntennaCoord::new((p / rows) as i32, (p % rows) as i32),
            Shape::Generic { coords, .. } => coords[p],
        })
    }

    pub fn coord_to_index(&self, c: AntennaCoord) -> Result<usize> {
        let out_of_range = CovError::CoordOutOfRange { x: c.x, y: c.y };
        match &self.shape {
            Shape::Ula { nt } => {
                if c.y != 0 || c.x < 0 || c.x as usize >= *nt {
                    return Err(out_of_range);
                }
                Ok(c.x as usize)
            }
            Shape::Upa { rows, cols } => {
                if c.x < 0 || c.y < 0 || c.x as usize >= *cols || c.y as usize >= *rows {
                    return Err(out_of_range);
                }
                Ok(c.x as usize * rows + c.y as usize)
            }
            Shape::Generic { lookup, .. } => lookup.get(&c).copied().ok_or(out_of_range),
        }
    }

    /// All antenna coordinates in index order.
    pub fn coords(&self) -> Vec<AntennaCoord> {
        match &self.shape {
            Shape::Generic { coords, .. } => coords.clone(),
            _ => (0..self.nt())
                .map(|p| self.index_to_coord(p).expect("index in range"))
                .collect(),
        }
    }

    /// Translation-equivalence partition of all ordered antenna pairs,
    /// computed on first use and shared afterwards.
    pub fn partition(&self) -> Arc<PairPartition> {
        self.partition
            .get_or_init(|| Arc::new(PairPartition::from_coords(&self.coords())))
            .clone()
    }

    /// The classes of [`Self::partition`], one per realized displacement.
    pub fn equivalence_classes(&self) -> Vec<PairClass> {
        self.partition().classes().to_vec()
    }
}

/// Ordered antenna pairs sharing one displacement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairClass {
    pub displacement: Displacement,
    /// Members in row-major `(p, q)` order.
    pub members: Vec<(usize, usize)>,
}

impl PairClass {
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

/// Partition of the `nt^2` ordered pairs into translation-equivalence classes.
///
/// Besides the classes themselves this keeps a dense class index per matrix
/// entry so that estimators can average in two linear passes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairPartition {
    nt: usize,
    classes: Vec<PairClass>,
    // column-major: entry (p, q) lives at p + q * nt
    class_of: Vec<u32>,
    conjugate: Vec<u32>,
    canonical: Vec<bool>,
}

impl PairPartition {
    /// Groups pairs by exact integer displacement. Classes are numbered in
    /// order of first appearance in a row-major scan; the first class of each
    /// `{d, -d}` couple is canonical and its conjugate partner mirrors it.
    pub fn from_coords(coords: &[AntennaCoord]) -> Self {
        let nt = coords.len();
        let mut ids: HashMap<Displacement, u32> = HashMap::new();
        let mut classes: Vec<PairClass> = Vec::new();
        let mut canonical = Vec::new();
        let mut class_of = vec![0u32; nt * nt];
        for (p, cp) in coords.iter().enumerate() {
            for (q, cq) in coords.iter().enumerate() {
                let d = (cq.x - cp.x, cq.y - cp.y);
                let id = *ids.entry(d).or_insert_with(|| {
                    let id = classes.len() as u32;
                    classes.push(PairClass {
                        displacement: d,
                        members: Vec::new(),
                    });
                    id
                });
                if id as usize == canonical.len() {
                    let partner_seen = d != (0, 0) && ids.contains_key(&(-d.0, -d.1));
                    canonical.push(!partner_seen);
                }
                classes[id as usize].members.push((p, q));
                class_of[p + q * nt] = id;
            }
        }
        let conjugate = classes
            .iter()
            .map(|c| ids[&(-c.displacement.0, -c.displacement.1)])
            .collect();
        Self {
            nt,
            classes,
            class_of,
            conjugate,
            canonical,
        }
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn classes(&self) -> &[PairClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class id of entry `(p, q)`.
    #[inline]
    pub fn class_of(&self, p: usize, q: usize) -> usize {
        self.class_of[p + q * self.nt] as usize
    }

    /// Column-major class ids, entry `(p, q)` at `p + q * nt`.
    pub fn class_index(&self) -> &[u32] {
        &self.class_of
    }

    /// Id of the class with the negated displacement.
    pub fn conjugate_of(&self, class: usize) -> usize {
        self.conjugate[class] as usize
    }

    pub fn is_canonical(&self, class: usize) -> bool {
        self.canonical[class]
    }

    pub fn find(&self, d: Displacement) -> Option<&PairClass> {
        self.classes.iter().find(|c| c.displacement == d)
    }
}

/// Closed-form class size `(N - |dx|)(M - |dy|)` on an `M x N` panel.
pub fn upa_class_cardinality(rows: usize, cols: usize, d: Displacement) -> usize {
    let dx = d.0.unsigned_abs() as usize;
    let dy = d.1.unsigned_abs() as usize;
    cols.saturating_sub(dx) * rows.saturating_sub(dy)
}
