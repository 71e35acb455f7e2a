use dnmap::characterization::{full_report, CheckConfig};
use dnmap::forward::{dn_mesh_operator, mesh_torus_minus_cap};
use dnmap::recon::{reconstruct, ReconstructConfig};
use dnmap::topology::{topology_of, TopologyConfig};
use dnmap::{GridSpec, TolPolicy};

/// A handle forces the coordinate to cover part of its image more than once.
#[test]
fn torus_coordinate_is_multivalent() {
    let mesh = mesh_torus_minus_cap(2.0, 1.0, 0.1).unwrap();
    let lam = dn_mesh_operator(&mesh, GridSpec::unit_circle(16).unwrap()).unwrap();
    assert_eq!(topology_of(&lam, &TopologyConfig::discretized()).unwrap().genus, 1);

    let cfg = ReconstructConfig {
        grid: 96,
        kernel_policy: TolPolicy::LeadingGap { min_ratio: 10.0 },
        kernel_gap: 10.0,
        ..Default::default()
    };
    let r = reconstruct(&lam, &cfg).unwrap();
    assert!(!r.univalent);
    assert!(r.region.multivalent);
    assert!(r.region.field.max_value() >= 2);
    assert!(r.region.area > 0.1);

    let report = full_report(&lam, &CheckConfig::discretized(0.01));
    assert_eq!(report.conditions.len(), 7);
    assert_eq!(report.kernel_dim, Some(16));
}
