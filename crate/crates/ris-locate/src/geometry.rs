//! Planar deployment geometry: terminal positions, per-path distances and
//! angles, and the closing step that maps an angle/delay estimate back to a
//! position.
//!
//! Everything lives in a 2-D plane. Angles are measured from the global +x
//! axis via `atan2`, in radians, in (-pi, pi]. Departure angles follow the
//! propagation direction of the first hop; arrival angles point from the
//! receiver back toward the last waypoint (the "look" direction of the
//! receiving array). Using the look-back convention on the receive side keeps
//! the cascade spatial frequency at the reflecting surface inside the
//! unambiguous zone for deployments where both ends sit on the same side of
//! the array.

use crate::error::{Error, Result};

/// Propagation speed used everywhere, in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.99792e8;

/// Minimum separation between any two points that define a path, in meters.
const MIN_SEPARATION: f64 = 1e-9;

/// Which of the two hops of the reflected link a path belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    /// Transmitter-to-surface hop.
    BsRis,
    /// Surface-to-receiver hop.
    RisUe,
}

/// A fixed deployment: base station, reflecting surface, user, and the
/// single-bounce scatterers of each hop.
///
/// Index 0 of each segment is the direct (line-of-sight) path; index `l >= 1`
/// is the path reflected off `scatterers_*[l - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub ue: [f64; 2],
    pub scatterers_br: Vec<[f64; 2]>,
    pub scatterers_rm: Vec<[f64; 2]>,
}

/// Distances, delay, and endpoint angles of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    pub segment: Segment,
    pub path_index: usize,
    /// Total traveled distance in meters.
    pub distance: f64,
    /// distance / c, in seconds.
    pub toa: f64,
    /// Angle of the first hop at the transmitter-side array (radians).
    pub departure: f64,
    /// Look-back angle of the last hop at the receiver-side array (radians).
    pub arrival: f64,
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn angle_of(v: [f64; 2]) -> f64 {
    v[1].atan2(v[0])
}

impl Scene {
    /// Build a scene, checking that every point participating in a path is
    /// separated from its neighbors by at least 1 nm.
    pub fn new(
        bs: [f64; 2],
        ris: [f64; 2],
        ue: [f64; 2],
        scatterers_br: Vec<[f64; 2]>,
        scatterers_rm: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let scene = Scene {
            bs,
            ris,
            ue,
            scatterers_br,
            scatterers_rm,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<()> {
        let check = |a: [f64; 2], b: [f64; 2], what: &str| -> Result<()> {
            if norm2(sub(a, b)) < MIN_SEPARATION {
                return Err(Error::InvalidScene(format!(
                    "{what} closer than {MIN_SEPARATION} m"
                )));
            }
            Ok(())
        };
        check(self.bs, self.ris, "bs and ris")?;
        check(self.ris, self.ue, "ris and ue")?;
        check(self.bs, self.ue, "bs and ue")?;
        for (l, s) in self.scatterers_br.iter().enumerate() {
            check(self.bs, *s, &format!("bs and br-scatterer {l}"))?;
            check(self.ris, *s, &format!("ris and br-scatterer {l}"))?;
        }
        for (l, s) in self.scatterers_rm.iter().enumerate() {
            check(self.ris, *s, &format!("ris and rm-scatterer {l}"))?;
            check(self.ue, *s, &format!("ue and rm-scatterer {l}"))?;
        }
        Ok(())
    }

    /// Number of paths (direct + scattered) on a segment.
    pub fn n_paths(&self, segment: Segment) -> usize {
        match segment {
            Segment::BsRis => 1 + self.scatterers_br.len(),
            Segment::RisUe => 1 + self.scatterers_rm.len(),
        }
    }

    fn endpoints(&self, segment: Segment) -> ([f64; 2], [f64; 2], &[[f64; 2]]) {
        match segment {
            Segment::BsRis => (self.bs, self.ris, &self.scatterers_br),
            Segment::RisUe => (self.ris, self.ue, &self.scatterers_rm),
        }
    }

    /// Full geometry (distance, delay, endpoint angles) of one path.
    pub fn path_geometry(&self, segment: Segment, path_index: usize) -> Result<PathGeometry> {
        let (tx, rx, scatterers) = self.endpoints(segment);
        let available = 1 + scatterers.len();
        if path_index >= available {
            return Err(Error::PathIndexOutOfRange {
                index: path_index,
                available,
            });
        }
        let (distance, departure, arrival) = if path_index == 0 {
            let d = norm2(sub(rx, tx));
            (d, angle_of(sub(rx, tx)), angle_of(sub(tx, rx)))
        } else {
            let s = scatterers[path_index - 1];
            let d = norm2(sub(s, tx)) + norm2(sub(rx, s));
            (d, angle_of(sub(s, tx)), angle_of(sub(s, rx)))
        };
        Ok(PathGeometry {
            segment,
            path_index,
            distance,
            toa: distance / SPEED_OF_LIGHT,
            departure,
            arrival,
        })
    }

    /// Geometry of every path on a segment, direct path first.
    pub fn segment_paths(&self, segment: Segment) -> Result<Vec<PathGeometry>> {
        (0..self.n_paths(segment))
            .map(|l| self.path_geometry(segment, l))
            .collect()
    }
}

/// Traveled distance of one path, in meters.
pub fn path_distance(scene: &Scene, segment: Segment, path_index: usize) -> Result<f64> {
    Ok(scene.path_geometry(segment, path_index)?.distance)
}

/// (departure, arrival) angles of one path, in radians.
pub fn path_angles(scene: &Scene, segment: Segment, path_index: usize) -> Result<(f64, f64)> {
    let g = scene.path_geometry(segment, path_index)?;
    Ok((g.departure, g.arrival))
}

/// Close the loop: place the user at the surface position plus the traveled
/// direct-hop distance along the estimated departure direction.
///
/// `aor` is the angle of departure at the surface toward the user (radians),
/// `toa` the surface-to-user delay in seconds (must be non-negative).
pub fn recover_position(ris: [f64; 2], aor: f64, toa: f64) -> Result<[f64; 2]> {
    if toa < 0.0 {
        return Err(Error::InvalidDelay {
            value: toa,
            reason: "negative surface-to-user delay",
        });
    }
    let d = SPEED_OF_LIGHT * toa;
    Ok([ris[0] + d * aor.cos(), ris[1] + d * aor.sin()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The baseline deployment used throughout the test suite.
    pub(crate) fn baseline_scene() -> Scene {
        Scene::new(
            [0.0, 0.0],
            [2.5, 4.0],
            [5.0, 3.0],
            vec![[1.0, 3.0]],
            vec![[4.0, 2.0]],
        )
        .unwrap()
    }

    #[test]
    fn direct_path_distance_is_euclidean() {
        let scene = baseline_scene();
        let d = path_distance(&scene, Segment::BsRis, 0).unwrap();
        assert_relative_eq!(d, 4.716990566028302, max_relative = 1e-12);
    }

    #[test]
    fn scattered_path_distance_sums_both_legs() {
        let scene = baseline_scene();
        let d = path_distance(&scene, Segment::BsRis, 1).unwrap();
        assert_relative_eq!(d, 4.965053297900374, max_relative = 1e-12);
    }

    #[test]
    fn colocated_endpoints_rejected() {
        let err = Scene::new([0.0, 0.0], [0.0, 0.0], [5.0, 3.0], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::InvalidScene(_)));
    }

    #[test]
    fn unit_distance_path() {
        let scene = Scene::new([0.0, 0.0], [1.0, 0.0], [2.0, 0.0], vec![], vec![]).unwrap();
        assert_relative_eq!(
            path_distance(&scene, Segment::RisUe, 0).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn path_index_out_of_range() {
        let scene = baseline_scene();
        assert!(matches!(
            path_distance(&scene, Segment::RisUe, 2),
            Err(Error::PathIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn departure_angle_of_surface_to_user_hop() {
        let scene = baseline_scene();
        let (dep, _) = path_angles(&scene, Segment::RisUe, 0).unwrap();
        assert_relative_eq!(dep, -0.3805063771123649, max_relative = 1e-12);
    }

    #[test]
    fn departure_angle_at_base_station() {
        let scene = baseline_scene();
        let (dep, _) = path_angles(&scene, Segment::BsRis, 0).unwrap();
        assert_relative_eq!(dep, 1.0121970114513341, max_relative = 1e-12);
    }

    #[test]
    fn arrival_angle_points_back_at_source() {
        let scene = baseline_scene();
        let (_, arr) = path_angles(&scene, Segment::BsRis, 0).unwrap();
        // look-back direction bs - ris = [-2.5, -4]
        assert_relative_eq!(arr, (-4.0f64).atan2(-2.5), max_relative = 1e-12);
    }

    #[test]
    fn user_due_east_of_surface_has_zero_departure() {
        let scene = Scene::new([0.0, 0.0], [1.0, 1.0], [3.0, 1.0], vec![], vec![]).unwrap();
        let (dep, _) = path_angles(&scene, Segment::RisUe, 0).unwrap();
        assert_relative_eq!(dep, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn scattered_path_angles_use_waypoint() {
        let scene = baseline_scene();
        let (dep, arr) = path_angles(&scene, Segment::RisUe, 1).unwrap();
        // first hop ris -> [4,2]; last hop look-back ue -> [4,2]
        assert_relative_eq!(dep, (-2.0f64).atan2(1.5), max_relative = 1e-12);
        assert_relative_eq!(arr, (-1.0f64).atan2(-1.0), max_relative = 1e-12);
    }

    #[test]
    fn recover_position_closes_direct_geometry() {
        let scene = baseline_scene();
        let g = scene.path_geometry(Segment::RisUe, 0).unwrap();
        let m = recover_position(scene.ris, g.departure, g.toa).unwrap();
        assert_relative_eq!(m[0], scene.ue[0], epsilon = 1e-9);
        assert_relative_eq!(m[1], scene.ue[1], epsilon = 1e-9);
    }

    #[test]
    fn zero_delay_recovers_surface_position() {
        let m = recover_position([2.5, 4.0], 1.234, 0.0).unwrap();
        assert_eq!(m, [2.5, 4.0]);
    }

    #[test]
    fn unit_delay_direction_step() {
        let m = recover_position([0.0, 0.0], 0.0, 1.0 / SPEED_OF_LIGHT).unwrap();
        assert_relative_eq!(m[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(m[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_delay_rejected() {
        assert!(matches!(
            recover_position([0.0, 0.0], 0.0, -1e-12),
            Err(Error::InvalidDelay { .. })
        ));
    }

    #[test]
    fn toa_scales_with_distance() {
        let scene = baseline_scene();
        let g0 = scene.path_geometry(Segment::BsRis, 0).unwrap();
        let g1 = scene.path_geometry(Segment::BsRis, 1).unwrap();
        assert!(g1.toa > g0.toa, "scattered path must be longer than direct");
        assert_relative_eq!(g0.toa * SPEED_OF_LIGHT, g0.distance, max_relative = 1e-12);
    }
}
