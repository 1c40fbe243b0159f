//! Shared helpers for the benchmark targets.

use geomatch::fixtures;
use geomatch::SimplicialShape;

/// Circle/ellipse pair at a given resolution, the standard benchmark input.
pub fn flow_pair(n: usize) -> (SimplicialShape, SimplicialShape) {
    (fixtures::circle(n, 1.0, (0.0, 0.0)), fixtures::ellipse(n, 1.2, 0.8))
}
