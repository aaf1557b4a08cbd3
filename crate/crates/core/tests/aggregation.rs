use matid_core::aggregate::class_probability_per_spectrum;
use matid_core::identify::identify;
use matid_core::io::results::{read_results_json, render_tree_dot, write_results_json, DotOptions, ResultsDocument};
use matid_core::search::SearchMetadata;
use matid_core::synth::{synthetic_library, LibraryConfig};
use matid_core::{
    averaged_coefficients, build_tree, class_probability, inclusion_probability, normalize, ClassHierarchy,
    Inclusion, ModelPosterior, ModelPrior, ModelSet, RegressionModel, SearchConfig,
};

const NAMES: [&str; 8] = ["C1", "C2", "N1", "N2", "P1", "P2", "V1", "V2"];

fn toy_hierarchy() -> ClassHierarchy {
    let path = |p: &[&str]| p.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let entries = [
        ("N1", path(&["Fabric", "Polymer", "Nylon"])),
        ("N2", path(&["Fabric", "Polymer", "Nylon"])),
        ("P1", path(&["Fabric", "Polymer", "Polyester"])),
        ("P2", path(&["Fabric", "Polymer", "Polyester"])),
        ("C1", path(&["Fabric", "Cotton"])),
        ("C2", path(&["Fabric", "Cotton"])),
        ("V1", path(&["Vegetation"])),
        ("V2", path(&["Vegetation"])),
    ];
    ClassHierarchy::from_paths(entries.iter().map(|(n, p)| (*n, p.as_slice()))).unwrap()
}

fn model(regressors: Vec<usize>, bic: f64) -> RegressionModel {
    RegressionModel {
        coefficients: vec![1.0; regressors.len()],
        regressors,
        intercept: None,
        rss: 1.0,
        n_obs: 100,
        bic,
        condition_flag: false,
    }
}

/// Singleton-model posterior with the given probabilities, set directly.
fn posterior(probs: &[(&str, f64)]) -> ModelPosterior {
    let models: Vec<RegressionModel> = probs
        .iter()
        .map(|(n, p)| model(vec![NAMES.iter().position(|x| x == n).unwrap()], -2.0 * p.ln()))
        .collect();
    ModelPosterior {
        models: ModelSet {
            names: NAMES.iter().map(|s| s.to_string()).collect(),
            best_bic: models.iter().map(|m| m.bic).fold(f64::INFINITY, f64::min),
            models,
            metadata: SearchMetadata::Exhaustive { enumerated: 8, flagged: 0 },
        },
        probabilities: probs.iter().map(|(_, p)| *p).collect(),
        prior: ModelPrior::Uniform,
    }
}

fn prob(post: &ModelPosterior, h: &ClassHierarchy, class: &str) -> f64 {
    class_probability(post, h, h.find_by_name(class).unwrap()).unwrap()
}

#[test]
fn toy_spectrum_one() {
    let h = toy_hierarchy();
    let post = posterior(&[("N1", 0.4), ("N2", 0.3), ("P1", 0.2), ("P2", 0.1)]);
    for (class, want) in [("Nylon", 0.7), ("Polyester", 0.3), ("Polymer", 1.0), ("Fabric", 1.0), ("Vegetation", 0.0), ("Cotton", 0.0)] {
        assert!((prob(&post, &h, class) - want).abs() < 1e-12, "{class}");
    }
    let dot = render_tree_dot(&build_tree(&post, &h), DotOptions::default());
    let expected = "digraph identification {
  node [shape=box];
  n0 [label=\"Library\\n p=1.0000\"];
  n1 [label=\"Vegetation\\n p=0.0000\"];
  n0 -> n1;
  n2 [label=\"Fabric\\n p=1.0000\"];
  n3 [label=\"Cotton\\n p=0.0000\"];
  n2 -> n3;
  n4 [label=\"Polymer\\n p=1.0000\"];
  n5 [label=\"Polyester\\n p=0.3000\"];
  n4 -> n5;
  n6 [label=\"Nylon\\n p=0.7000\"];
  n4 -> n6;
  n2 -> n4;
  n0 -> n2;
}
";
    assert_eq!(dot, expected);
}

#[test]
fn toy_spectrum_two() {
    let h = toy_hierarchy();
    let post = posterior(&[("C1", 0.1), ("V1", 0.4), ("V2", 0.5)]);
    assert!((prob(&post, &h, "Fabric") - 0.1).abs() < 1e-12);
    assert!((prob(&post, &h, "Vegetation") - 0.9).abs() < 1e-12);
    let tree = build_tree(&post, &h);
    let names: Vec<&str> = tree.root.children.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["Fabric", "Vegetation"]);
    let dot = render_tree_dot(&tree, DotOptions::default());
    assert!(dot.contains("\"Library\\n p=1.0000\""));
    assert!(dot.contains("\"Fabric\\n p=0.1000\""));
    assert!(dot.contains("\"Vegetation\\n p=0.9000\""));
    let cond = render_tree_dot(&tree, DotOptions { conditional: true });
    assert!(cond.contains("\"Cotton\\n p=1.0000\""));
}

#[test]
fn toy_posterior_via_bic_normalization() {
    let h = toy_hierarchy();
    let set = posterior(&[("N1", 0.4), ("N2", 0.3), ("P1", 0.2), ("P2", 0.1)]).models;
    let post = normalize(&set, &ModelPrior::Uniform).unwrap();
    assert!((prob(&post, &h, "Nylon") - 0.7).abs() < 1e-12);
    assert!((prob(&post, &h, "Polyester") - 0.3).abs() < 1e-12);
    assert_eq!(inclusion_probability(&post, "V1"), Inclusion::Known(0.0));
    assert_eq!(inclusion_probability(&post, "X9"), Inclusion::NotInLibrary);
}

#[test]
fn shared_models_count_once() {
    let h = toy_hierarchy();
    let mut post = posterior(&[("N1", 0.6), ("P1", 0.4)]);
    // one model holds both nylons
    post.models.models[0].regressors = vec![2, 3];
    post.models.models[0].coefficients = vec![1.0, 1.0];
    assert!((prob(&post, &h, "Nylon") - 0.6).abs() < 1e-15);
    let node = h.find_by_name("Nylon").unwrap();
    assert!((class_probability_per_spectrum(&post, &h, node).unwrap() - 1.2).abs() < 1e-15);
    let tree = build_tree(&post, &h);
    // sibling overflow is allowed and never renormalized
    let polymer = tree.find("Polymer").unwrap();
    assert!((polymer.probability - 1.0).abs() < 1e-15);
}

#[test]
fn averaged_coefficients_match_weighted_sum() {
    let mut post = posterior(&[("N1", 0.5), ("N2", 0.3), ("P1", 0.2)]);
    post.models.models[0].coefficients = vec![2.0];
    post.models.models[1].regressors = vec![2, 3];
    post.models.models[1].coefficients = vec![-1.0, 4.0];
    let r = averaged_coefficients(&post);
    assert!((r.regressors["N1"].averaged_coefficient - (0.5 * 2.0 - 0.3)).abs() < 1e-15);
    assert!((r.regressors["N2"].averaged_coefficient - 0.3 * 4.0).abs() < 1e-15);
    assert!((r.regressors["N1"].inclusion - 0.8).abs() < 1e-15);
    assert_eq!(r.regressors["V2"].averaged_coefficient, 0.0);
}

#[test]
fn results_round_trip_and_are_byte_stable() {
    let syn = synthetic_library(9, &LibraryConfig { spectra: 16, ..Default::default() }).unwrap();
    let observed = syn.library.spectra()[5].clone();
    let id = identify(&syn.library, &observed, &SearchConfig { max_size: 2, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let doc = write_results_json(&id.posterior, &id.report, &id.tree, &a).unwrap();
    write_results_json(&id.posterior, &id.report, &id.tree, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back: ResultsDocument = read_results_json(&a).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.tree(), id.tree);
    // an exact library member is identified with certainty down to its leaf
    let leaf = observed.class_path.last().unwrap();
    assert!(id.tree.find(leaf).unwrap().probability > 0.999);
    let text = std::fs::read_to_string(&a).unwrap();
    let keys: Vec<usize> = ["\"averaged_coefficients\"", "\"inclusion\"", "\"models\"", "\"search\"", "\"tree\""]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}
