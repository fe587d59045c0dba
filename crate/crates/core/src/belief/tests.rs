use super::*;
use crate::sensors::{gps_to_observation, SensorModelConfig, TargetId, VelocityEstimator};

fn lane_map(n: usize, spacing: f64) -> Arc<TopologicalMap> {
    let coords = (0..n).map(|i| Vec2::new(i as f64 * spacing, 0.0)).collect();
    let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Arc::new(TopologicalMap::from_undirected(coords, &pairs).unwrap())
}

fn polytunnel() -> Arc<TopologicalMap> {
    Arc::new(crate::topology::PolytunnelLayout::default().build().unwrap().map)
}

fn point_mass_obs(len: usize, at: usize, identifying: bool, t: f64) -> Observation {
    let mut l = vec![0.0; len];
    l[at] = 1.0;
    let (sensor, target) = if identifying {
        (SensorKind::Gps, Some(TargetId(0)))
    } else {
        (SensorKind::Lidar, None)
    };
    Observation::new(l, sensor, target, None, t).unwrap()
}

fn filter(map: &Arc<TopologicalMap>, particles: usize, seed: u64) -> BeliefFilter {
    let config = FilterConfig {
        particle_count: particles,
        seed,
        ..Default::default()
    };
    BeliefFilter::new(map.clone(), config).unwrap()
}

fn parked(node: usize, count: usize) -> Vec<Particle> {
    vec![
        Particle {
            node: NodeId(node),
            velocity: Vec2::ZERO,
            dwell: 0.0,
        };
        count
    ]
}

#[test]
fn identifying_point_mass_initializes_every_particle_there() {
    let map = polytunnel();
    let mut f = filter(&map, 500, 1);
    f.initialize(&point_mass_obs(map.len(), 7, true, 0.0)).unwrap();
    assert!(f.particles().iter().all(|p| p.node == NodeId(7)));
    assert!(f.particles().iter().all(|p| (0.0..=1.0).contains(&p.dwell)));
}

#[test]
fn non_identifying_initialization_is_uniform() {
    let map = polytunnel();
    let n = 100_000;
    let mut f = filter(&map, n, 2);
    f.initialize(&point_mass_obs(map.len(), 7, false, 0.0)).unwrap();
    let mut counts = vec![0usize; map.len()];
    for p in f.particles() {
        counts[p.node.0] += 1;
    }
    let p = 1.0 / map.len() as f64;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    // Bonferroni-free 3 sigma per node would flag ~0.4 nodes on average;
    // allow 4 sigma so the check is about uniformity, not luck.
    for (node, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() < 4.0 * sd, "node {node}: {c} vs {mean}");
    }
    let within_3: usize = counts.iter().filter(|&&c| (c as f64 - mean).abs() < 3.0 * sd).count();
    assert!(within_3 >= map.len() - 2);
}

#[test]
fn initial_velocity_variance_matches_config() {
    let map = polytunnel();
    let n = 100_000;
    let mut f = filter(&map, n, 3);
    f.initialize(&point_mass_obs(map.len(), 0, true, 0.0)).unwrap();
    let xs: Vec<f64> = f.particles().iter().flat_map(|p| [p.velocity.x, p.velocity.y]).collect();
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = 0.05 * (2.0 / (m - 1.0)).sqrt();
    assert!((var - 0.05).abs() < 3.0 * se, "variance {var}");
    assert!(mean.abs() < 3.0 * (0.05f64 / m).sqrt(), "mean {mean}");
}

#[test]
fn opposing_velocity_keeps_particles_in_place() {
    let map = lane_map(2, 1.0);
    let mut f = filter(&map, 50, 4);
    let particles = vec![
        Particle {
            node: NodeId(1),
            velocity: Vec2::new(1.0, 0.0),
            dwell: 100.0,
        };
        50
    ];
    f.set_particles(particles, 0.0).unwrap();
    f.predict(10.0).unwrap();
    assert!(f.particles().iter().all(|p| p.node == NodeId(1)));
    assert!(f.particles().iter().all(|p| (p.dwell - 110.0).abs() < 1e-12));
}

#[test]
fn jumping_resets_dwell_and_nudges_velocity_along_edge() {
    let map = lane_map(3, 2.0);
    let mut f = filter(&map, 200, 5);
    let particles = vec![
        Particle {
            node: NodeId(0),
            velocity: Vec2::new(0.5, 0.3),
            dwell: 50.0,
        };
        200
    ];
    f.set_particles(particles, 0.0).unwrap();
    f.predict(1.0).unwrap();
    let jumped: Vec<_> = f.particles().iter().filter(|p| p.node == NodeId(1)).collect();
    assert!(!jumped.is_empty());
    for p in jumped {
        assert_eq!(p.dwell, 0.0);
        // Edge velocity is 2 m / 51 s along +x: x pulled towards it, y decays.
        assert!(p.velocity.x < 0.5 && p.velocity.y < 0.3 && p.velocity.y > 0.0);
    }
}

#[test]
fn lidar_weight_is_node_term_only() {
    let map = lane_map(4, 1.0);
    let mut f = filter(&map, 4, 6);
    let particles = (0..4)
        .map(|i| Particle {
            node: NodeId(i),
            velocity: Vec2::new(1.0, 0.0),
            dwell: 0.0,
        })
        .collect();
    f.set_particles(particles, 0.0).unwrap();
    let l = vec![0.1, 0.9, 0.3, 0.0];
    let obs = Observation::new(l.clone(), SensorKind::Lidar, None, Some(Vec2::new(1.0, 0.0)), 0.0).unwrap();
    let w = f.weight(&obs).unwrap();
    for i in 0..4 {
        assert_eq!(w.weights[i], 0.25 * l[i]);
    }
    assert_eq!(w.estimate, NodeId(1));
}

#[test]
fn matching_velocity_hits_the_velocity_weight_mode() {
    let map = lane_map(2, 1.0);
    let mut f = filter(&map, 1, 7);
    let vs = Vec2::new(0.8, 0.0);
    f.set_particles(
        vec![Particle {
            node: NodeId(0),
            velocity: vs,
            dwell: 0.0,
        }],
        0.0,
    )
    .unwrap();
    let obs = Observation::new(vec![0.0, 1.0], SensorKind::Gps, Some(TargetId(1)), Some(vs), 0.0).unwrap();
    let w = f.weight(&obs).unwrap();
    // sigma = 0.4: (1 / (0.4 sqrt(2 pi)) + 1) / 4, evaluated independently.
    assert!((w.weights[0] - 0.499_338_925_250_895_4).abs() < 1e-12, "{}", w.weights[0]);
}

#[test]
fn topological_mass_is_linear_in_weights() {
    let map = lane_map(3, 1.0);
    let mut f = filter(&map, 10, 8);
    let mut particles = parked(0, 5);
    particles.extend(parked(2, 5));
    f.set_particles(particles, 0.0).unwrap();
    let obs = Observation::new(vec![0.8, 0.0, 0.2], SensorKind::Rfid, Some(TargetId(0)), None, 0.0).unwrap();
    let w = f.weight(&obs).unwrap();
    assert!((w.masses[0] / w.masses[2] - 4.0).abs() < 1e-12);
    assert_eq!(w.estimate, NodeId(0));
    let total: f64 = w.weights.iter().sum();
    assert!((w.masses.iter().sum::<f64>() - total).abs() < 1e-12);
}

#[test]
fn zero_weights_fall_back_to_uniform() {
    let map = lane_map(3, 1.0);
    let mut f = filter(&map, 10, 9);
    f.set_particles(parked(0, 10), 0.0).unwrap();
    let obs = point_mass_obs(3, 2, false, 0.0);
    let w = f.weight(&obs).unwrap();
    assert!(w.degenerate);
    assert!(w.weights.iter().all(|&x| x == 1.0));
    let report = f.update(&obs).unwrap();
    assert!(report.degenerate_weights);
    assert!(!report.reinitialized);
    assert_eq!(f.particles().len(), 10);
}

#[test]
fn resampling_without_teleport_reuses_existing_nodes() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 10);
    f.initialize(&point_mass_obs(map.len(), 0, false, 0.0)).unwrap();
    let before: std::collections::HashSet<_> = f.particles().iter().map(|p| p.node).collect();
    let weights: Vec<f64> = (0..300).map(|i| (i % 7) as f64).collect();
    f.resample(&weights).unwrap();
    assert!(f.particles().iter().all(|p| before.contains(&p.node)));
    assert!(f.particles().iter().all(|p| p.dwell >= 0.0));
}

#[test]
fn concentrated_weight_copies_one_particle() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 11);
    f.initialize(&point_mass_obs(map.len(), 0, false, 0.0)).unwrap();
    let chosen = f.particles()[17];
    let mut weights = vec![0.0; 300];
    weights[17] = 1.0;
    f.resample(&weights).unwrap();
    for p in f.particles() {
        assert_eq!(p.node, chosen.node);
        // noise only
        assert!((p.velocity - chosen.velocity).norm() < 0.2);
        assert!((p.dwell - chosen.dwell).abs() <= 0.1 + 1e-12);
    }
}

#[test]
fn teleport_rate_matches_probability() {
    let map = polytunnel();
    let n = 100_000;
    let mut f = filter(&map, n, 12);
    f.set_particles(parked(0, n), 0.0).unwrap();
    f.set_teleport_probability(1e-3);
    f.resample(&vec![1.0; n]).unwrap();
    let moved = f.particles().iter().filter(|p| p.node != NodeId(0)).count() as f64;
    // A teleport lands back on node 0 with probability 1/137.
    let p = 1e-3 * (1.0 - 1.0 / map.len() as f64);
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((moved - mean).abs() < 3.0 * sd, "{moved} teleports, expected {mean}");
}

#[test]
fn systematic_resampling_preserves_count_and_support() {
    let map = lane_map(4, 1.0);
    let config = FilterConfig {
        particle_count: 100,
        resampling: ResamplingScheme::Systematic,
        ..Default::default()
    };
    let mut f = BeliefFilter::new(map, config).unwrap();
    let mut particles = parked(0, 50);
    particles.extend(parked(3, 50));
    f.set_particles(particles, 0.0).unwrap();
    let mut weights = vec![0.0; 100];
    for w in weights.iter_mut().skip(50) {
        *w = 1.0;
    }
    f.resample(&weights).unwrap();
    assert_eq!(f.particles().len(), 100);
    assert!(f.particles().iter().all(|p| p.node == NodeId(3)));
}

#[test]
fn divergent_identifying_observation_reinitializes_and_enables_teleport() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 13);
    f.set_particles(parked(3, 300), 0.0).unwrap();
    // Broad identifying observation on nodes 60..90, disjoint from node 3.
    let mut l = vec![0.0; map.len()];
    for x in l.iter_mut().take(90).skip(60) {
        *x = 1.0;
    }
    let obs = Observation::new(l, SensorKind::Rfid, Some(TargetId(0)), None, 1.0).unwrap();
    let report = f.update(&obs).unwrap();
    assert!((report.jsd - 1.0).abs() < 1e-12);
    assert!(report.reinitialized);
    assert!(report.entropy >= 0.6, "entropy {}", report.entropy);
    assert_eq!(report.teleport_probability, 1e-3);
    // Everything but the odd teleport lands in the observed block.
    let inside = f.particles().iter().filter(|p| (60..90).contains(&p.node.0)).count();
    assert!(inside >= 295, "{inside}");
}

#[test]
fn non_identifying_divergence_does_not_reinitialize() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 14);
    f.set_particles(parked(3, 300), 0.0).unwrap();
    let report = f.update(&point_mass_obs(map.len(), 120, false, 1.0)).unwrap();
    assert!((report.jsd - 1.0).abs() < 1e-12);
    assert!(!report.reinitialized);
    assert_eq!(report.teleport_probability, 0.0);
}

#[test]
fn concentrated_belief_disables_teleport() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 15);
    f.set_particles(parked(3, 300), 0.0).unwrap();
    // Point-mass identifying observation far away: re-initialize, then the
    // resampled set sits on one node and the entropy test switches pr_j off.
    let report = f.update(&point_mass_obs(map.len(), 120, true, 1.0)).unwrap();
    assert!(report.reinitialized);
    assert!(report.entropy < 0.6);
    assert_eq!(report.teleport_probability, 0.0);
    assert_eq!(report.estimate, NodeId(120));
}

#[test]
fn monitors_off_never_reinitialize() {
    let map = polytunnel();
    let config = FilterConfig {
        particle_count: 300,
        monitors: false,
        initial_teleport_probability: 1e-3,
        ..Default::default()
    };
    let mut f = BeliefFilter::new(map.clone(), config).unwrap();
    f.set_particles(parked(3, 300), 0.0).unwrap();
    let report = f.update(&point_mass_obs(map.len(), 120, true, 1.0)).unwrap();
    assert!(!report.reinitialized);
    // entropy toggle disabled too
    assert_eq!(report.teleport_probability, 1e-3);
}

#[test]
fn repeated_fixes_concentrate_the_belief() {
    let map = polytunnel();
    let mut f = filter(&map, 300, 16);
    // Start from a uniform spread.
    f.initialize(&point_mass_obs(map.len(), 0, false, 0.0)).unwrap();
    let sensors = SensorModelConfig::default();
    let mut est = VelocityEstimator::new(10);
    let node = NodeId(44);
    let fix = map.coords(node);
    let mut converged_at = None;
    for k in 1..=50 {
        let obs = gps_to_observation(&map, &sensors, fix, TargetId(0), &mut est, k as f64).unwrap();
        let report = f.update(&obs).unwrap();
        if report.entropy < 0.6 {
            converged_at = Some(k);
            break;
        }
    }
    // Seed-pinned regression bound.
    let k = converged_at.expect("entropy never dropped below 0.6");
    assert!(k <= 5, "took {k} updates");
}

#[test]
fn predict_only_leaves_parked_particles_alone() {
    let map = polytunnel();
    let mut f = filter(&map, 100, 17);
    f.set_particles(parked(10, 100), 0.0).unwrap();
    assert_eq!(f.predict_only(4.0).unwrap(), NodeId(10));
    assert_eq!(f.predict_only(8.0).unwrap(), NodeId(10));
    assert_eq!(f.confidence(), 1.0);
}

#[test]
fn uninitialized_filter_errors() {
    let map = polytunnel();
    let mut f = filter(&map, 10, 18);
    assert_eq!(f.predict_only(1.0), Err(FilterError::Uninitialized));
    assert!(f.weight(&point_mass_obs(map.len(), 0, true, 0.0)).is_err());
}

#[test]
fn time_must_not_go_backwards() {
    let map = lane_map(3, 1.0);
    let mut f = filter(&map, 10, 19);
    f.set_particles(parked(0, 10), 5.0).unwrap();
    assert!(matches!(f.predict(4.0), Err(FilterError::TimeWentBackwards { .. })));
}

#[test]
fn invalid_configs_are_rejected() {
    let map = lane_map(3, 1.0);
    for config in [
        FilterConfig { particle_count: 0, ..Default::default() },
        FilterConfig { jsd_threshold: 1.5, ..Default::default() },
        FilterConfig { noise_velocity_variance: -1.0, ..Default::default() },
        FilterConfig { prediction_rate: 0.0, ..Default::default() },
    ] {
        assert!(BeliefFilter::new(map.clone(), config).is_err());
    }
}

/// Expected number of jumps after `ticks` predictions of period `dt` for a
/// particle with a fixed forward rate, by propagating the distribution over
/// dwell counts.
fn expected_jumps(rate: f64, dt: f64, ticks: usize) -> f64 {
    // dist[j] = probability that the dwell is j * dt
    let mut dist = vec![0.0; ticks + 2];
    dist[0] = 1.0;
    let mut jumps = 0.0;
    for _ in 0..ticks {
        let mut next = vec![0.0; ticks + 2];
        for (j, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let pj = 1.0 - (rate * j as f64 * dt).exp();
            jumps += p * pj;
            next[0] += p * pj;
            next[j + 1] += p * (1.0 - pj);
        }
        dist = next;
    }
    jumps
}

#[test]
fn predict_only_advance_matches_dwell_chain() {
    let spacing = 10.0 / 3.0;
    let map = lane_map(80, spacing);
    let n = 20_000;
    let config = FilterConfig {
        particle_count: n,
        // Freeze the velocity so the forward rate stays constant.
        velocity_window: 1e15,
        seed: 20,
        ..Default::default()
    };
    let period = config.prediction_period();
    assert_eq!(period, 4.0);
    let mut f = BeliefFilter::new(map, config).unwrap();
    let start = vec![
        Particle {
            node: NodeId(0),
            velocity: Vec2::new(1.0, 0.0),
            dwell: 0.0,
        };
        n
    ];
    f.set_particles(start, 0.0).unwrap();
    let ticks = 30;
    for k in 1..=ticks {
        f.predict_only(k as f64 * period).unwrap();
    }
    let mean = f.particles().iter().map(|p| p.node.0 as f64).sum::<f64>() / n as f64;
    let var = f.particles().iter().map(|p| (p.node.0 as f64 - mean).powi(2)).sum::<f64>() / n as f64;

    let rate = jump_rate(1.0, spacing);
    let expected = expected_jumps(rate, period, ticks);
    let se = (var / n as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "mean advance {mean}, chain says {expected}");
    // At most one hop per tick.
    assert!(f.particles().iter().all(|p| p.node.0 <= ticks));
}
