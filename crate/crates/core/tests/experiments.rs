use geoattn::experiments::{
    descent_demo, embed_tree, export_trajectories, read_trajectory, DescentParams, EmbeddingParams, EmbeddingSpace,
    TreeSpec, SEEDS,
};

fn distortion(space: EmbeddingSpace, seed: u64) -> f64 {
    embed_tree(
        &TreeSpec::default(),
        &EmbeddingParams {
            space,
            seed,
            ..EmbeddingParams::default()
        },
    )
    .unwrap()
    .final_distortion
}

#[test]
fn hyperbolic_beats_flat_across_curvatures() {
    let flat = distortion(EmbeddingSpace::Euclidean, 0);
    for curvature in [0.5, 2.0] {
        let curved = distortion(EmbeddingSpace::Lorentz { curvature }, 0);
        assert!(curved < flat, "c={curvature}: {curved} vs {flat}");
    }
}

#[test]
fn depth_one_tree_embeds_exactly() {
    let spec = TreeSpec {
        depth: 1,
        ..TreeSpec::default()
    };
    for space in [
        EmbeddingSpace::Euclidean,
        EmbeddingSpace::Lorentz { curvature: 0.5 },
        EmbeddingSpace::Lorentz { curvature: 2.0 },
    ] {
        for dim in [2, 5] {
            let run = embed_tree(
                &spec,
                &EmbeddingParams {
                    space,
                    dim,
                    steps: 2000,
                    ..EmbeddingParams::default()
                },
            )
            .unwrap();
            assert!(run.final_distortion <= 0.01);
            assert!(run.worst_case_distortion >= 1.0);
        }
    }
}

#[test]
fn descent_trajectories_roundtrip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    for seed in SEEDS {
        let run = descent_demo(&DescentParams {
            seed,
            ..DescentParams::default()
        })
        .unwrap();
        assert!(run.oblique.iterations <= run.unconstrained.iterations);
        let [u, o] = export_trajectories(&run, dir.path()).unwrap();
        assert_eq!(read_trajectory(&u).unwrap(), run.unconstrained.trajectory);
        assert_eq!(read_trajectory(&o).unwrap(), run.oblique.trajectory);
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2 * SEEDS.len());
}

#[test]
fn well_conditioned_problem_gives_unit_ratio() {
    for seed in SEEDS {
        let run = descent_demo(&DescentParams {
            condition_number: 1.0,
            seed,
            ..DescentParams::default()
        })
        .unwrap();
        assert_eq!(run.iteration_ratio(), 1.0);
    }
}
