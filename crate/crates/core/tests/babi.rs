use std::collections::BTreeSet;

use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec, SyntheticTask5, TASK5_TEMPLATES};
use hcn::babi::{
    parse_babi, parse_inventory, restaurants_from_rows, serialize_babi, write_inventory, BabiDomain,
    BabiOptions, BabiTask, DbRow, EntityState, Slot, TemplateRole,
};
use hcn::engine::{teacher_forced, DomainPack};
use hcn::features::Featurizer;

fn task5() -> (SyntheticTask5, BabiDomain, Vec<hcn::engine::LabeledDialog<Vec<hcn::babi::DbLine>>>) {
    let data = synthetic_task5(&SyntheticSpec {
        train: 120,
        test: 20,
        seed: 17,
    });
    let (domain, labeled) =
        BabiDomain::build(BabiOptions::new(BabiTask::Task5), &data.train, &data.kb, &data.test_oov).unwrap();
    (data, domain, labeled)
}

fn role_index(domain: &BabiDomain, role: TemplateRole) -> usize {
    domain.roles().iter().position(|r| *r == role).unwrap()
}

#[test]
fn task5_inventory_matches_the_sixteen_templates() {
    let (_, domain, _) = task5();
    let surfaces: BTreeSet<&str> = domain.templates().iter().map(|t| t.surface.as_str()).collect();
    let expected: BTreeSet<&str> = TASK5_TEMPLATES.into_iter().collect();
    assert_eq!(surfaces, expected);
    assert_eq!(domain.unk_action(), None);

    let text = write_inventory(domain.templates());
    assert_eq!(parse_inventory(&text, "inventory").unwrap(), domain.templates());
}

#[test]
fn rendering_reproduces_every_training_utterance() {
    let (_, domain, labeled) = task5();
    let featurizer = Featurizer::none();
    for dialog in &labeled {
        teacher_forced(&domain, &featurizer, dialog, |view| {
            let reference = &dialog.turns[view.index].reference;
            assert_eq!(&domain.render(view.state, view.label)?, reference);
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn every_training_action_is_permitted_by_the_mask() {
    let (_, domain, labeled) = task5();
    assert_eq!(domain.active_rules().len(), 5, "no rule should be disabled on clean data");
    for dialog in &labeled {
        teacher_forced(&domain, &Featurizer::none(), dialog, |view| {
            assert!(view.mask.get(view.label), "turn {} label {}", view.index, view.label);
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn oov_test_dialogs_are_fully_covered() {
    let (data, domain, _) = task5();
    let mut test_domain = domain.clone();
    test_domain.set_test_mode(true);
    for dialog in test_domain.label_dialogs(&data.test_oov) {
        teacher_forced(&test_domain, &Featurizer::none(), &dialog, |view| {
            let reference = &dialog.turns[view.index].reference;
            assert_eq!(&test_domain.render(view.state, view.label)?, reference);
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn task5_masks() {
    let (_, domain, _) = task5();
    let api = role_index(&domain, TemplateRole::Api);
    let offer = role_index(&domain, TemplateRole::Offer);
    let ask_price = role_index(&domain, TemplateRole::Ask(Slot::Price));

    let mut state = EntityState::default();
    assert!(!domain.compute_action_mask(&state).get(api));

    for (slot, value) in [
        (Slot::Cuisine, "italian"),
        (Slot::Location, "rome"),
        (Slot::PartySize, "four"),
        (Slot::Price, "cheap"),
    ] {
        state.slots.insert(slot, value.into());
    }
    let mask = domain.compute_action_mask(&state);
    assert!(mask.get(api));
    assert!(!mask.get(offer));
    assert!(!mask.get(ask_price));
}

#[test]
fn task5_context_features() {
    let (_, domain, _) = task5();
    let mut state = EntityState::default();
    state.slots.insert(Slot::Cuisine, "italian".into());
    state.slots.insert(Slot::Location, "rome".into());
    assert_eq!(domain.compute_context_features(&state, &[]), vec![1.0, 1.0, 0.0, 0.0]);
    assert_eq!(domain.context_len(), 4);
}

#[test]
fn later_mentions_overwrite_slots() {
    let (_, domain, _) = task5();
    let mut state = EntityState::default();
    let m = domain.lexicon().extract("in a cheap price range please");
    domain.update_entity_state(&mut state, &m, &[]);
    assert_eq!(state.slots[&Slot::Price], "cheap");
    let m = domain.lexicon().extract("actually i would prefer expensive");
    domain.update_entity_state(&mut state, &m, &[]);
    assert_eq!(state.slots[&Slot::Price], "expensive");
    let before = state.clone();
    domain.update_entity_state(&mut state, &[], &[]);
    assert_eq!(state, before);
}

#[test]
fn extraction_examples() {
    let (_, domain, _) = task5();
    let m = domain.lexicon().extract("i'd like to book a table with italian food");
    assert_eq!(m.len(), 1);
    assert_eq!((m[0].slot, m[0].value.as_str()), (Slot::Cuisine, "italian"));
    assert!(domain.lexicon().extract("good morning").is_empty());
}

#[test]
fn database_results_sort_by_rating() {
    let rows: Vec<DbRow> = [("a", "3"), ("b", "8"), ("c", "5")]
        .iter()
        .map(|(name, rating)| DbRow {
            restaurant: name.to_string(),
            attribute: "R_rating".into(),
            value: rating.to_string(),
        })
        .collect();
    let names: Vec<String> = restaurants_from_rows(&rows).into_iter().map(|r| r.name).collect();
    assert_eq!(names, ["b", "c", "a"]);
}

const TASK6_FIXTURE: &str = "\
1 <SILENCE>\thello , welcome to the cambridge restaurant system
2 i want canapes food\ti'm sorry but there is no canapes restaurant
3 what about italian\tapi_call italian R_location R_price
4 prezzo R_cuisine italian
5 prezzo R_location west
6 prezzo R_price moderate
7 prezzo R_rating 6
8 <SILENCE>\tprezzo is a nice restaurant in the west of town in the moderate price range
9 thank you goodbye\tyou are welcome

1 <SILENCE>\thello , welcome to the cambridge restaurant system
2 canapes food please\tapi_call canapes R_location R_price
3 api_call no result
4 <SILENCE>\ti'm sorry but there is no canapes restaurant
5 thank you goodbye\tyou are welcome
";

fn task6_fixture(unk_min_count: usize) -> (BabiDomain, Vec<hcn::engine::LabeledDialog<Vec<hcn::babi::DbLine>>>) {
    let dialogs = parse_babi(TASK6_FIXTURE, "fixture").unwrap();
    assert_eq!(serialize_babi(&dialogs), TASK6_FIXTURE);
    let options = BabiOptions {
        unk_min_count,
        ..BabiOptions::new(BabiTask::Task6)
    };
    BabiDomain::build(options, &dialogs, &[], &[]).unwrap()
}

#[test]
fn empty_queries_are_mined_from_training_data() {
    let (domain, _) = task6_fixture(0);
    assert!(domain.empty_queries().cuisines.contains("canapes"));
    let mut state = EntityState::default();
    state.slots.insert(Slot::Cuisine, "canapes".into());
    let features = domain.compute_context_features(&state, &[]);
    assert_eq!(features.len(), 14);
    assert_eq!(features[12], 1.0);
    assert_eq!(features[13], 1.0);
    state.slots.insert(Slot::Cuisine, "italian".into());
    let features = domain.compute_context_features(&state, &[]);
    assert_eq!(&features[12..], &[0.0, 0.0]);
}

#[test]
fn no_result_free_training_gives_an_empty_table() {
    let (data, domain, _) = task5();
    assert!(domain.empty_queries().is_empty());
    assert!(!data.train.is_empty());
}

#[test]
fn restaurant_description_becomes_one_template() {
    let (domain, _) = task6_fixture(0);
    assert!(domain
        .template_id("<name> is a nice restaurant in the <location> of town in the <price> price range")
        .is_some());
}

#[test]
fn rare_templates_fold_into_a_masked_unk() {
    let (mut domain, labeled) = task6_fixture(2);
    let unk = domain.unk_action().expect("singletons fold");
    assert_eq!(unk, domain.action_count() - 1);
    assert!(labeled.iter().flat_map(|d| &d.turns).any(|t| t.label == unk));
    let state = EntityState::default();
    assert!(domain.compute_action_mask(&state).get(unk));
    domain.set_test_mode(true);
    assert!(!domain.compute_action_mask(&state).get(unk));
}
