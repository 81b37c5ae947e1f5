//! Matched view pairs, point tracks and the view graph.

use std::collections::{BTreeMap, HashSet, VecDeque};

use thiserror::Error;

use crate::geometry::{CameraPose, Observation};

pub type ViewId = usize;
pub type TrackId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("matched pair ({0}, {1}) has no points")]
    EmptyPair(ViewId, ViewId),
    #[error("track {track} appears twice in pair ({left}, {right})")]
    DuplicateTrack { left: ViewId, right: ViewId, track: TrackId },
    #[error("view id {0} is out of range")]
    UnknownView(ViewId),
    #[error("edge ({0}, {1}) joins a view to itself")]
    SelfLoop(ViewId, ViewId),
    #[error("edge ({left}, {right}) references track {track} which is not observed in both views")]
    TrackMismatch { left: ViewId, right: ViewId, track: TrackId },
    #[error("view graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<ViewId>>),
}

/// One correspondence: the same track seen in the left and right view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub left: Observation,
    pub right: Observation,
    pub track: TrackId,
}

/// Observations shared by two views.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedPair {
    pub left_view: ViewId,
    pub right_view: ViewId,
    pub points: Vec<Correspondence>,
}

impl MatchedPair {
    pub fn new(left_view: ViewId, right_view: ViewId, points: Vec<Correspondence>) -> Result<Self, GraphError> {
        let pair = MatchedPair { left_view, right_view, points };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.points.is_empty() {
            return Err(GraphError::EmptyPair(self.left_view, self.right_view));
        }
        let mut seen = HashSet::with_capacity(self.points.len());
        for c in &self.points {
            if !seen.insert(c.track) {
                return Err(GraphError::DuplicateTrack {
                    left: self.left_view,
                    right: self.right_view,
                    track: c.track,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same pair with the roles of the two views exchanged.
    pub fn swapped(&self) -> Self {
        MatchedPair {
            left_view: self.right_view,
            right_view: self.left_view,
            points: self
                .points
                .iter()
                .map(|c| Correspondence { left: c.right, right: c.left, track: c.track })
                .collect(),
        }
    }
}

/// All observations of one scene point.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub observations: Vec<(ViewId, Observation)>,
}

impl Track {
    pub fn observation_in(&self, view: ViewId) -> Option<Observation> {
        self.observations.iter().find(|(v, _)| *v == view).map(|(_, o)| *o)
    }
}

/// Cameras, matched edges and tracks of a multi-view problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGraph {
    pub n_views: usize,
    pub ground_truth: Option<Vec<CameraPose>>,
    pub tracks: Vec<Track>,
    pub edges: Vec<MatchedPair>,
}

impl ViewGraph {
    /// Builds one edge per listed view pair from the shared track observations.
    /// Pairs sharing no track are skipped.
    pub fn from_tracks(
        n_views: usize,
        tracks: Vec<Track>,
        pairs: &[(ViewId, ViewId)],
        ground_truth: Option<Vec<CameraPose>>,
    ) -> Result<Self, GraphError> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= n_views {
                return Err(GraphError::UnknownView(a));
            }
            if b >= n_views {
                return Err(GraphError::UnknownView(b));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a, b));
            }
            let points: Vec<_> = tracks
                .iter()
                .filter_map(|t| {
                    Some(Correspondence { left: t.observation_in(a)?, right: t.observation_in(b)?, track: t.id })
                })
                .collect();
            if !points.is_empty() {
                edges.push(MatchedPair { left_view: a, right_view: b, points });
            }
        }
        let graph = ViewGraph { n_views, ground_truth, tracks, edges };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let by_id: BTreeMap<TrackId, &Track> = self.tracks.iter().map(|t| (t.id, t)).collect();
        for e in &self.edges {
            e.validate()?;
            for v in [e.left_view, e.right_view] {
                if v >= self.n_views {
                    return Err(GraphError::UnknownView(v));
                }
            }
            if e.left_view == e.right_view {
                return Err(GraphError::SelfLoop(e.left_view, e.right_view));
            }
            for c in &e.points {
                let ok = by_id.get(&c.track).is_some_and(|t| {
                    t.observation_in(e.left_view) == Some(c.left) && t.observation_in(e.right_view) == Some(c.right)
                });
                if !ok {
                    return Err(GraphError::TrackMismatch { left: e.left_view, right: e.right_view, track: c.track });
                }
            }
        }
        Ok(())
    }

    /// Connected components over the edge set, each sorted, ordered by first view.
    pub fn components(&self) -> Vec<Vec<ViewId>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n_views];
        let mut out = Vec::new();
        for start in 0..self.n_views {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn ensure_connected(&self) -> Result<(), GraphError> {
        let comps = self.components();
        if comps.len() > 1 {
            return Err(GraphError::Disconnected(comps));
        }
        Ok(())
    }

    /// Per view, the list of `(neighbor, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(ViewId, usize)>> {
        let mut adj = vec![Vec::new(); self.n_views];
        for (idx, e) in self.edges.iter().enumerate() {
            adj[e.left_view].push((e.right_view, idx));
            adj[e.right_view].push((e.left_view, idx));
        }
        adj
    }
}
