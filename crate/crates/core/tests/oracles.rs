//! Implementation-independent oracles and property checks for scoring,
//! similarity, fusion and overlap measures.

use std::collections::{HashMap, HashSet};

use artrec_core::ctfidf::{ctfidf_scores, ClusterAssignment, CtfidfConfig, Label};
use artrec_core::embed::{build_similarity, EmbeddingSet, SimilarityMatrix};
use artrec_core::metrics::{iou, rbo};
use artrec_core::recsys::{fuse, rank_all, recommend, score_paintings, FusionMode, Ranking, UserRatings};
use artrec_core::textprep::TokenizedDoc;
use proptest::prelude::*;

fn brute_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    dot / (nu * nv).sqrt()
}

fn brute_scores(vectors: &[Vec<f64>], rated: &[(usize, u8)]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..vectors.len() {
        let mut s = 0.0;
        for &(j, r) in rated {
            s += (r as f64 / 5.0) * brute_cosine(&vectors[i], &vectors[j]);
        }
        out.push(s / rated.len() as f64);
    }
    out
}

/// Term-by-term prefix agreement: A_d = |a[..d] ∩ b[..d]| / d.
fn brute_rbo(a: &[String], b: &[String], p: f64) -> f64 {
    let k = a.len();
    let agreement = |d: usize| {
        let sa: HashSet<&String> = a[..d].iter().collect();
        let sb: HashSet<&String> = b[..d].iter().collect();
        sa.intersection(&sb).count() as f64 / d as f64
    };
    let mut sum = 0.0;
    for d in 1..=k {
        sum += agreement(d) * p.powi(d as i32);
    }
    agreement(k) * p.powi(k as i32) + (1.0 - p) / p * sum
}

fn ids(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("p{i:02}")).collect()
}

fn set_from(vectors: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::new("t", ids(vectors.len()).into_iter().zip(vectors.iter().cloned())).unwrap()
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<(usize, u8)>)> {
    (2usize..=10, 1usize..=6).prop_flat_map(|(m, dim)| {
        (prop::collection::vec(nonzero_vec(dim), m), prop::sample::subsequence((0..m).collect::<Vec<_>>(), 1..=m.min(5)))
            .prop_flat_map(|(vs, rated)| {
                let n = rated.len();
                (Just(vs), Just(rated), prop::collection::vec(1u8..=5, n))
            })
            .prop_map(|(vs, rated, rs)| (vs, rated.into_iter().zip(rs).collect()))
    })
}

fn ratings_for(rated: &[(usize, u8)]) -> UserRatings {
    UserRatings::new(rated.iter().map(|&(j, r)| (format!("p{j:02}"), r))).unwrap()
}

fn ranking(ids: &[String]) -> Ranking {
    Ranking {
        engine_id: "x".into(),
        items: ids.iter().enumerate().map(|(i, id)| (id.clone(), -(i as f64))).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn score_matches_brute_force((vectors, rated) in instance()) {
        let m = build_similarity(&set_from(&vectors)).unwrap();
        let got = score_paintings(&m, &ratings_for(&rated)).unwrap();
        let want = brute_scores(&vectors, &rated);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12, "{} vs {}", g, w);
        }
    }

    #[test]
    fn similarity_matches_brute_force(vectors in prop::collection::vec(nonzero_vec(7), 2..=12)) {
        let m = build_similarity(&set_from(&vectors)).unwrap();
        for i in 0..vectors.len() {
            for j in 0..vectors.len() {
                let want = brute_cosine(&vectors[i], &vectors[j]).clamp(-1.0, 1.0);
                prop_assert!((m.get(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn similarity_scale_invariant(
        vectors in prop::collection::vec(nonzero_vec(5), 2..=10),
        scales in prop::collection::vec(0.01f64..100.0, 10),
    ) {
        let a = build_similarity(&set_from(&vectors)).unwrap();
        let scaled: Vec<Vec<f64>> = vectors.iter().zip(&scales).map(|(v, c)| v.iter().map(|x| x * c).collect()).collect();
        let b = build_similarity(&set_from(&scaled)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn positive_weight_scaling_keeps_ranking((vectors, rated) in instance(), c in 0.1f64..10.0) {
        let m = build_similarity(&set_from(&vectors)).unwrap();
        let ratings = ratings_for(&rated);
        let base = score_paintings(&m, &ratings).unwrap();
        let weighted: Vec<(String, f64)> = rated.iter().map(|&(j, r)| (format!("p{j:02}"), c * r as f64 / 5.0)).collect();
        let refs: Vec<(&str, f64)> = weighted.iter().map(|(id, w)| (id.as_str(), *w)).collect();
        let scaled = artrec_core::recsys::weighted_scores(&m, &refs).unwrap();
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert!((x * c - y).abs() < 1e-9);
        }
        let order = |s: &[f64]| {
            let mut ix: Vec<usize> = (0..s.len()).collect();
            ix.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            ix
        };
        // Exact ties can split under rescaling by rounding; compare only where gaps are resolvable.
        let ob = order(&base);
        let os = order(&scaled);
        for w in ob.windows(2) {
            if base[w[0]] - base[w[1]] > 1e-9 {
                let pa = os.iter().position(|&x| x == w[0]).unwrap();
                let pb = os.iter().position(|&x| x == w[1]).unwrap();
                prop_assert!(pa < pb);
            }
        }
    }

    #[test]
    fn recommend_excludes_rated_and_is_distinct((vectors, rated) in instance()) {
        let m = build_similarity(&set_from(&vectors)).unwrap();
        let ratings = ratings_for(&rated);
        let max = vectors.len() - rated.len();
        prop_assume!(max >= 1);
        let rec = recommend(&m, &ratings, max).unwrap();
        prop_assert_eq!(rec.len(), max);
        let seen: HashSet<&str> = rec.ids().into_iter().collect();
        prop_assert_eq!(seen.len(), max);
        for id in rec.ids() {
            prop_assert!(!ratings.contains(id));
        }
        for w in rec.items.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn fuse_symmetric_and_rank_only(
        perm_a in Just(ids(12)).prop_shuffle(),
        perm_b in Just(ids(12)).prop_shuffle(),
        w in 0.0f64..=1.0,
        r in 1usize..=12,
    ) {
        let a = ranking(&perm_a);
        let b = ranking(&perm_b);
        for mode in [FusionMode::WeightedRrSum, FusionMode::PaperProduct] {
            let ab = fuse(&a, &b, w, 1.0 - w, r, mode).unwrap();
            let ba = fuse(&b, &a, 1.0 - w, w, r, mode).unwrap();
            prop_assert_eq!(ab.ids(), ba.ids());
            // Replace scores by an order-preserving transform.
            let mut a2 = a.clone();
            for (i, item) in a2.items.iter_mut().enumerate() {
                item.1 = 1000.0 / (i as f64 + 1.0).powi(3);
            }
            let transformed = fuse(&a2, &b, w, 1.0 - w, r, mode).unwrap();
            prop_assert_eq!(transformed.ids(), ab.ids());
        }
    }

    #[test]
    fn rbo_matches_prefix_oracle(
        (a, b) in (1usize..=20).prop_flat_map(|k| {
            let pool: Vec<String> = (0..30).map(|i| format!("x{i}")).collect();
            (
                prop::sample::subsequence(pool.clone(), k).prop_shuffle(),
                prop::sample::subsequence(pool, k).prop_shuffle(),
            )
        }),
        p in prop::sample::select(vec![0.5, 0.9, 0.98]),
    ) {
        let got = rbo(&a, &b, p).unwrap();
        prop_assert!((got - brute_rbo(&a, &b, p)).abs() < 1e-12);
        prop_assert!((got - rbo(&b, &a, p).unwrap()).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&got));
        let i = iou(&a, &b).unwrap();
        prop_assert_eq!(i, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&i));
    }

    #[test]
    fn ctfidf_non_negative_and_base_invariant(
        docs in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 1..15), 2..8),
        split in 1usize..7,
    ) {
        let n = docs.len();
        let split = split.min(n - 1);
        let tdocs: Vec<TokenizedDoc> = docs
            .iter()
            .enumerate()
            .map(|(i, t)| TokenizedDoc::new(format!("d{i}"), t.iter().map(|s| s.to_string()).collect()))
            .collect();
        let asg = ClusterAssignment {
            ids: tdocs.iter().map(|d| d.painting_id.clone()).collect(),
            labels: (0..n).map(|i| Label::Cluster(usize::from(i >= split))).collect(),
            num_clusters: 2,
        };
        let natural = ctfidf_scores(&tdocs, &asg, &CtfidfConfig::default()).unwrap();
        for list in &natural.clusters {
            for (_, s) in list {
                prop_assert!(*s >= 0.0);
            }
        }
        for base in [2.0, 10.0] {
            let cfg = CtfidfConfig { log_base: Some(base), ..CtfidfConfig::default() };
            let other = ctfidf_scores(&tdocs, &asg, &cfg).unwrap();
            for (x, y) in natural.clusters.iter().zip(&other.clusters) {
                let wx: Vec<&String> = x.iter().map(|(w, _)| w).collect();
                let wy: Vec<&String> = y.iter().map(|(w, _)| w).collect();
                prop_assert_eq!(wx, wy);
            }
        }
    }
}

#[test]
fn similarity_invariants_large() {
    let ids = ids(200);
    let set = artrec_core::synth::random_embeddings(&ids, "t", 16, 17);
    let m = build_similarity(&set).unwrap();
    check_matrix(&m);
}

fn check_matrix(m: &SimilarityMatrix) {
    for i in 0..m.len() {
        assert!((m.get(i, i) - 1.0).abs() <= 1e-9);
        for j in 0..m.len() {
            assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-9);
            assert!(m.get(i, j).abs() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn personalization_changes_argmax() {
    // p00 and p01 point in opposite directions; p02 sits near p00, p03 near p01.
    let vectors = vec![vec![1.0, 0.0], vec![-1.0, 0.1], vec![0.9, 0.1], vec![-0.9, 0.2], vec![0.0, 1.0]];
    let m = build_similarity(&set_from(&vectors)).unwrap();
    let likes_first = UserRatings::new(vec![("p00".to_string(), 5), ("p01".to_string(), 1)]).unwrap();
    let likes_second = UserRatings::new(vec![("p00".to_string(), 1), ("p01".to_string(), 5)]).unwrap();
    let a = recommend(&m, &likes_first, 1).unwrap();
    let b = recommend(&m, &likes_second, 1).unwrap();
    assert_eq!(a.ids(), vec!["p02"]);
    assert_eq!(b.ids(), vec!["p03"]);
}

#[test]
fn full_ranking_feeds_fusion() {
    let vectors: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64).cos(), (i as f64).sin(), 0.3]).collect();
    let m = build_similarity(&set_from(&vectors)).unwrap();
    let u = UserRatings::new(vec![("p03".to_string(), 4)]).unwrap();
    let full = rank_all(&m, &u).unwrap();
    assert_eq!(full.len(), 7);
    let fused = fuse(&full, &full, 0.5, 0.5, 7, FusionMode::WeightedRrSum).unwrap();
    assert_eq!(fused.ids(), full.ids());
    let by_id: HashMap<&str, f64> = fused.items.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    assert!((by_id[full.ids()[0]] - 1.0).abs() < 1e-12);
}
