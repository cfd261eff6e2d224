//! Kinematic skeletons: a parent tree over joints plus left/right mirror
//! pairs. The tree and the mirror relation define which neighbor class every
//! spatial edge of the space-time graph belongs to.
//!
//! # Text format
//!
//! One joint per line, in index order, as `index name parent mirror` where
//! `parent` and `mirror` are indices or `-`. Blank lines and lines starting
//! with `#` are ignored. Exactly one joint has parent `-` (the root).
//!
//! ```text
//! # index name parent mirror
//! 0 pelvis - -
//! 1 r_hip 0 4
//! ...
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    mirror: Vec<Option<usize>>,
    bones: Vec<(usize, usize)>,
    root: usize,
}

/// One broken invariant found by [`SkeletonTopology::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    LengthMismatch,
    NoRoot,
    MultipleRoots(Vec<usize>),
    IndexOutOfRange { joint: usize, index: usize },
    Cycle(usize),
    Unreachable(usize),
    SelfMirror(usize),
    NotInvolutive(usize),
    MirrorParents { a: usize, b: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "no joints"),
            Violation::LengthMismatch => write!(f, "names, parents and mirrors differ in length"),
            Violation::NoRoot => write!(f, "no root joint"),
            Violation::MultipleRoots(r) => write!(f, "multiple roots {r:?}"),
            Violation::IndexOutOfRange { joint, index } => {
                write!(f, "joint {joint} references out-of-range index {index}")
            }
            Violation::Cycle(j) => write!(f, "cycle through joint {j}"),
            Violation::Unreachable(j) => write!(f, "joint {j} unreachable from root"),
            Violation::SelfMirror(j) => write!(f, "joint {j} is its own mirror"),
            Violation::NotInvolutive(j) => write!(f, "symmetry not involutive at joint {j}"),
            Violation::MirrorParents { a, b } => {
                write!(f, "mirror pair ({a},{b}) has parents that are neither mirrors nor both midline")
            }
        }
    }
}

const DEFAULT_JOINTS: [(&str, Option<usize>, Option<usize>); 17] = [
    ("pelvis", None, None),
    ("r_hip", Some(0), Some(4)),
    ("r_knee", Some(1), Some(5)),
    ("r_ankle", Some(2), Some(6)),
    ("l_hip", Some(0), Some(1)),
    ("l_knee", Some(4), Some(2)),
    ("l_ankle", Some(5), Some(3)),
    ("spine", Some(0), None),
    ("thorax", Some(7), None),
    ("neck", Some(8), None),
    ("head", Some(9), None),
    ("l_shoulder", Some(8), Some(14)),
    ("l_elbow", Some(11), Some(15)),
    ("l_wrist", Some(12), Some(16)),
    ("r_shoulder", Some(8), Some(11)),
    ("r_elbow", Some(14), Some(12)),
    ("r_wrist", Some(15), Some(13)),
];

impl Default for SkeletonTopology {
    fn default() -> Self {
        default_topology()
    }
}

/// The 17-joint skeleton shared by the common 2D-to-3D lifting backbones.
pub fn default_topology() -> SkeletonTopology {
    let names = DEFAULT_JOINTS.iter().map(|j| j.0.to_string()).collect();
    let parent = DEFAULT_JOINTS.iter().map(|j| j.1).collect();
    let mirror = DEFAULT_JOINTS.iter().map(|j| j.2).collect();
    SkeletonTopology::new(names, parent, mirror).expect("default topology is valid")
}

impl SkeletonTopology {
    /// Build and validate.
    pub fn new(names: Vec<String>, parent: Vec<Option<usize>>, mirror: Vec<Option<usize>>) -> Result<Self> {
        let topo = Self::from_raw(names, parent, mirror);
        topo.validate()
            .map_err(|v| Error::InvalidTopology(v.iter().map(ToString::to_string).collect()))?;
        Ok(topo)
    }

    /// Build without validation. Bones are derived from `parent`; the root is
    /// the first joint without a parent (0 if none).
    pub fn from_raw(names: Vec<String>, parent: Vec<Option<usize>>, mirror: Vec<Option<usize>>) -> Self {
        let root = parent.iter().position(Option::is_none).unwrap_or(0);
        let bones = parent
            .iter()
            .enumerate()
            .filter_map(|(j, p)| p.map(|p| (p, j)))
            .collect();
        SkeletonTopology {
            names,
            parent,
            mirror,
            bones,
            root,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parent[j]
    }

    pub fn mirror(&self, j: usize) -> Option<usize> {
        self.mirror[j]
    }

    /// Mirror of `j`, or `j` itself for midline joints.
    pub fn mirror_or_self(&self, j: usize) -> usize {
        self.mirror[j].unwrap_or(j)
    }

    pub fn is_midline(&self, j: usize) -> bool {
        self.mirror[j].is_none()
    }

    /// `(parent, child)` pairs, ordered by child index.
    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.joint_count()).filter(|&c| self.parent[c] == Some(j)).collect()
    }

    /// Number of parent edges from `j` up to the root.
    pub fn spine_distance(&self, j: usize) -> Result<usize> {
        let n = self.joint_count();
        if j >= n {
            return Err(Error::JointOutOfRange { index: j, joints: n });
        }
        let mut d = 0;
        let mut cur = j;
        while let Some(p) = self.parent[cur] {
            cur = p;
            d += 1;
            if d > n {
                return Err(Error::InvalidTopology(vec![Violation::Cycle(j).to_string()]));
            }
        }
        Ok(d)
    }

    /// Pairs of mirrored bones `(left-or-first, partner)`. A bone `(p, c)`
    /// pairs with `(mirror(p), mirror(c))`, a midline joint being its own
    /// mirror. Each pair is listed once, keyed by the smaller child index.
    pub fn symmetric_bone_pairs(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mut out = Vec::new();
        for &(p, c) in &self.bones {
            let Some(mc) = self.mirror[c] else { continue };
            if c > mc {
                continue;
            }
            let partner = (self.mirror_or_self(p), mc);
            if self.bones.contains(&partner) {
                out.push(((p, c), partner));
            }
        }
        out
    }

    /// Check every structural invariant and report all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let n = self.parent.len();
        let mut v = Vec::new();
        if n == 0 {
            return Err(vec![Violation::Empty]);
        }
        if self.names.len() != n || self.mirror.len() != n {
            return Err(vec![Violation::LengthMismatch]);
        }
        for j in 0..n {
            for idx in [self.parent[j], self.mirror[j]].into_iter().flatten() {
                if idx >= n {
                    v.push(Violation::IndexOutOfRange { joint: j, index: idx });
                }
            }
        }
        if !v.is_empty() {
            return Err(v);
        }

        let roots: Vec<usize> = (0..n).filter(|&j| self.parent[j].is_none()).collect();
        match roots.len() {
            0 => v.push(Violation::NoRoot),
            1 => {}
            _ => v.push(Violation::MultipleRoots(roots.clone())),
        }

        // cycles: walking up from any joint must terminate within n steps
        let mut on_cycle = vec![false; n];
        for j in 0..n {
            let mut cur = j;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    on_cycle[j] = true;
                    break;
                }
            }
        }
        // report each cycle once, at its smallest member
        let mut reported = vec![false; n];
        for j in 0..n {
            if !on_cycle[j] || reported[j] {
                continue;
            }
            let mut cur = j;
            for _ in 0..n {
                cur = self.parent[cur].expect("cycle members have parents");
            }
            let start = cur;
            let mut members = vec![start];
            let mut c = self.parent[start].unwrap();
            while c != start {
                members.push(c);
                c = self.parent[c].unwrap();
            }
            if members.iter().any(|&m| reported[m]) {
                continue;
            }
            members.iter().for_each(|&m| reported[m] = true);
            v.push(Violation::Cycle(*members.iter().min().unwrap()));
        }

        if let [root] = roots[..] {
            let reach = bfs_depths(&self.parent, root);
            for (j, d) in reach.iter().enumerate() {
                if d.is_none() && !on_cycle[j] {
                    v.push(Violation::Unreachable(j));
                }
            }
        }

        for j in 0..n {
            if let Some(m) = self.mirror[j] {
                if m == j {
                    v.push(Violation::SelfMirror(j));
                } else if self.mirror[m] != Some(j) {
                    v.push(Violation::NotInvolutive(j));
                }
            }
        }

        for a in 0..n {
            let Some(b) = self.mirror[a] else { continue };
            if a > b || self.mirror[b] != Some(a) {
                continue;
            }
            match (self.parent[a], self.parent[b]) {
                (Some(pa), Some(pb)) => {
                    let mirrored = self.mirror[pa] == Some(pb);
                    let midline = pa == pb && self.mirror[pa].is_none();
                    if !(mirrored || midline) {
                        v.push(Violation::MirrorParents { a, b });
                    }
                }
                (None, None) => {}
                _ => v.push(Violation::MirrorParents { a, b }),
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn to_text(&self) -> String {
        let idx = |o: Option<usize>| o.map_or_else(|| "-".to_string(), |i| i.to_string());
        let mut s = String::from("# index name parent mirror\n");
        for j in 0..self.joint_count() {
            s.push_str(&format!("{} {} {} {}\n", j, self.names[j], idx(self.parent[j]), idx(self.mirror[j])));
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut names = Vec::new();
        let mut parent = Vec::new();
        let mut mirror = Vec::new();
        let idx = |tok: &str, line: usize| -> Result<Option<usize>> {
            if tok == "-" {
                return Ok(None);
            }
            tok.parse()
                .map(Some)
                .map_err(|_| Error::format(origin, format!("line {line}: bad index {tok:?}")))
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(Error::format(origin, format!("line {}: expected 4 fields", ln + 1)));
            }
            let i: usize = toks[0]
                .parse()
                .map_err(|_| Error::format(origin, format!("line {}: bad joint index", ln + 1)))?;
            if i != names.len() {
                return Err(Error::format(origin, format!("line {}: joint {i} out of order", ln + 1)));
            }
            names.push(toks[1].to_string());
            parent.push(idx(toks[2], ln + 1)?);
            mirror.push(idx(toks[3], ln + 1)?);
        }
        Self::new(names, parent, mirror)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn bfs_depths(parent: &[Option<usize>], root: usize) -> Vec<Option<usize>> {
    let n = parent.len();
    let mut depth = vec![None; n];
    depth[root] = Some(0);
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        for c in 0..n {
            if parent[c] == Some(u) && depth[c].is_none() {
                depth[c] = Some(depth[u].unwrap() + 1);
                q.push_back(c);
            }
        }
    }
    depth
}
