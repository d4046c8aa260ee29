mod common;

use common::*;
use dot_core::casedb::{
    BehaviourFacet, CaseDatabase, Category, DesignCase, FunctionFacet, StructureFacet,
};
use dot_core::tree::CaseId;
use proptest::prelude::*;

fn bare(id: &str, name: &str, location: &str, wearing: &str, category: Category) -> DesignCase {
    DesignCase {
        id: CaseId(id.into()),
        name: name.into(),
        category,
        function: FunctionFacet::default(),
        behaviour: BehaviourFacet::default(),
        structure: StructureFacet {
            technical_elements: vec![],
            on_body_location: location.into(),
            wearing_mode: wearing.into(),
        },
        source: "src".into(),
    }
}

#[test]
fn fixture_counts_match_file() {
    let text = std::fs::read_to_string(asset("fixtures/cases.jsonl")).unwrap();
    let prototypes = text.lines().filter(|l| l.contains("\"category\":\"prototype\"")).count();
    let products = text.lines().filter(|l| l.contains("\"category\":\"product\"")).count();
    let db = fixture_db();
    assert_eq!((prototypes, products), (8, 4));
    assert_eq!(db.counts()[&Category::Prototype], prototypes);
    assert_eq!(db.counts()[&Category::Product], products);
    assert_eq!(db.export(), text);
}

#[test]
fn toy_corpus_hand_evaluated() {
    // tokens: a = sensor glove hand glove, b = smart ring finger ring,
    // c = sensor patch sensor arm adhesive; avgdl = 13/3
    let db = CaseDatabase::from_cases(vec![
        bare("a", "sensor glove", "hand", "glove", Category::Prototype),
        bare("b", "smart ring", "finger", "ring", Category::Product),
        bare("c", "sensor patch sensor", "arm", "adhesive", Category::Prototype),
    ])
    .unwrap();
    let hits = db.retrieve("sensor glove", 3).unwrap();
    let expected = [("a", 1.863737239248637), ("c", 0.6194517878538268), ("b", 0.0)];
    for (hit, (id, score)) in hits.iter().zip(expected) {
        assert_eq!(hit.case_id.as_str(), id);
        assert!(rel_close(hit.score, score, 1e-12), "{} vs {score}", hit.score);
    }
}

#[test]
fn task_one_best_products_match_filtered_oracle() {
    let db = fixture_db();
    let b = brief("briefs/task1_fitness.toml");
    let products: Vec<&DesignCase> = db.cases().iter().filter(|c| c.category == Category::Product).collect();
    let oracle = brute_rank(&products, &format!("{} {}", b.background, b.target_problems), 2);
    let got = db.best_products(&b, 2).unwrap();
    let ids: Vec<&str> = got.views.iter().map(|v| v.case_id.as_str()).collect();
    let oracle_ids: Vec<&str> = oracle.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(ids, oracle_ids);
    assert!(oracle[0].1 > 0.0);
}

#[test]
fn mask_query_finds_mask_cases() {
    let db = fixture_db();
    let hits = db.retrieve("anti-epidemic mask comfort", 2).unwrap();
    let ids: Vec<&str> = hits.iter().map(|h| h.case_id.as_str()).collect();
    assert!(ids.contains(&"w05") || ids.contains(&"w01"));
}

const VOCAB: [&str; 12] = [
    "sensor", "glove", "mask", "ring", "wrist", "haptic", "fan", "filter", "led", "strap", "audio", "heart",
];

fn arb_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(0usize..VOCAB.len(), 1..6)
        .prop_map(|ix| ix.into_iter().map(|i| VOCAB[i]).collect::<Vec<_>>().join(" "))
}

prop_compose! {
    fn arb_corpus()(texts in proptest::collection::vec((arb_text(), arb_text(), arb_text(), any::<bool>()), 1..=20)) -> Vec<DesignCase> {
        texts.into_iter().enumerate().map(|(i, (name, desc, loc, product))| {
            let mut c = bare(&format!("d{i:02}"), &name, &loc, "strap",
                if product { Category::Product } else { Category::Prototype });
            c.function.description = desc;
            c
        }).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]
    #[test]
    fn index_matches_brute_force(corpus in arb_corpus(), query in arb_text()) {
        let db = CaseDatabase::from_cases(corpus.clone()).unwrap();
        let refs: Vec<&DesignCase> = corpus.iter().collect();
        let oracle = brute_rank(&refs, &query, corpus.len());
        let hits = db.retrieve(&query, corpus.len()).unwrap();
        prop_assert_eq!(hits.len(), oracle.len());
        for (h, (id, score)) in hits.iter().zip(&oracle) {
            prop_assert_eq!(h.case_id.as_str(), id.as_str());
            prop_assert!(rel_close(h.score, *score, 1e-9));
        }
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].case_id < w[1].case_id));
        }
        // determinism
        prop_assert_eq!(db.retrieve(&query, corpus.len()).unwrap(), hits);
    }
}
