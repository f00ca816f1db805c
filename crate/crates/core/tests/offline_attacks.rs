use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use scauth::adversary::{
    attack_pscab_reversed, attack_pscav_reversed, consistent, offline_filter, run_scenario, AttackerModel,
    AttackerView, CardMemory, ConfirmationOrder, Dictionary, SCENARIOS,
};
use scauth::chain_rng::RngState;
use scauth::group::GroupConfig;
use scauth::handshake::{provision, run_in_memory, Authenticator};
use scauth::wire::ProtocolId;
use scauth::Error;

fn dict_with_truth(index: usize) -> Dictionary {
    Dictionary::default_fixture().with_true_index(index).unwrap()
}

fn stolen(protocol: ProtocolId, dict: &Dictionary, seed: u64) -> (CardMemory, Authenticator, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pw = dict.true_password().unwrap().to_vec();
    let (card, server) = provision(protocol, GroupConfig::mersenne61(), b"victim", b"server", &pw, 0, &mut rng).unwrap();
    (CardMemory::read(&card), server, rng)
}

#[test]
fn reversed_order_leaks_the_password_in_one_session() {
    for protocol in [ProtocolId::Pscab, ProtocolId::Pscav] {
        for truth in [0, 5, 63] {
            let dict = dict_with_truth(truth);
            let (memory, server, mut rng) = stolen(protocol, &dict, truth as u64);
            let outcome = match &server {
                Authenticator::Pscab(s) => attack_pscab_reversed(&memory, s, ConfirmationOrder::ServerFirst, &dict, &mut rng),
                Authenticator::Pscav(s) => attack_pscav_reversed(&memory, s, ConfirmationOrder::ServerFirst, &dict, &mut rng),
                Authenticator::Ssca(_) => unreachable!(),
            }
            .unwrap();
            assert_eq!(outcome.surviving_indices, vec![truth], "{protocol}");
            assert_eq!(outcome.sessions, 1);
            assert!(outcome.impersonation);
        }
    }
}

#[test]
fn card_first_order_leaves_every_candidate() {
    for protocol in [ProtocolId::Pscab, ProtocolId::Pscabv, ProtocolId::Pscav] {
        let dict = dict_with_truth(9);
        let (memory, server, mut rng) = stolen(protocol, &dict, 3);
        let outcome = match &server {
            Authenticator::Pscab(s) => attack_pscab_reversed(&memory, s, ConfirmationOrder::CardFirst, &dict, &mut rng),
            Authenticator::Pscav(s) => attack_pscav_reversed(&memory, s, ConfirmationOrder::CardFirst, &dict, &mut rng),
            Authenticator::Ssca(_) => unreachable!(),
        }
        .unwrap();
        assert_eq!(outcome.surviving, 64);
        assert_eq!(outcome.sessions, 1);
        assert!(!outcome.impersonation);
    }
}

#[test]
fn per_user_generator_limits_reversed_attack_to_one_guess() {
    let dict = dict_with_truth(20);
    let (memory, server, mut rng) = stolen(ProtocolId::Pscabv, &dict, 8);
    let Authenticator::Pscab(s) = &server else { unreachable!() };
    let outcome = attack_pscab_reversed(&memory, s, ConfirmationOrder::ServerFirst, &dict, &mut rng).unwrap();
    assert!(outcome.surviving >= 63);
    assert!(outcome.is_sound(&dict));
}

#[test]
fn reversed_attack_against_ssca_is_not_applicable() {
    let err = run_scenario("reversed-confirmation", ProtocolId::Ssca, AttackerModel::TypeIII, &dict_with_truth(0), 1);
    assert!(matches!(err, Err(Error::NotApplicable { .. })));
}

#[test]
fn ssca_type_iii_versus_type_iii_prime() {
    let dict = dict_with_truth(17);
    let iii = run_scenario("stolen-card-read", ProtocolId::Ssca, AttackerModel::TypeIII, &dict, 4).unwrap();
    assert_eq!(iii.surviving_indices, vec![17]);
    assert!(iii.impersonation);
    let prime = run_scenario("stolen-card-read", ProtocolId::Ssca, AttackerModel::TypeIIIPrime, &dict, 4).unwrap();
    assert_eq!(prime.surviving, 64);
    assert!(!prime.impersonation);
}

#[test]
fn group_protocols_resist_stolen_card_read_with_transcripts() {
    for protocol in [ProtocolId::Pscab, ProtocolId::Pscabv, ProtocolId::Pscav] {
        for model in [AttackerModel::TypeIII, AttackerModel::TypeIV] {
            let scenario = if model == AttackerModel::TypeIV { "memory-stick" } else { "stolen-card-read" };
            let outcome = run_scenario(scenario, protocol, model, &dict_with_truth(30), 5).unwrap();
            assert_eq!(outcome.surviving, 64, "{protocol} {model}");
            assert!(!outcome.impersonation);
        }
    }
}

#[test]
fn memory_stick_scenario_needs_a_memory_stick_model() {
    let err = run_scenario("memory-stick", ProtocolId::Pscab, AttackerModel::TypeIII, &dict_with_truth(0), 0);
    assert!(matches!(err, Err(Error::ModelMismatch { .. })));
}

#[test]
fn secure_variants_survive_random_dictionaries() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for round in 0..10u64 {
        let dict = Dictionary::random(&mut rng, 64).unwrap().with_true_index((round * 7) as usize % 64).unwrap();
        for protocol in [ProtocolId::Pscab, ProtocolId::Pscav] {
            let outcome = run_scenario("stolen-card-read", protocol, AttackerModel::TypeIII, &dict, round).unwrap();
            assert_eq!(outcome.surviving, 64);
            let outcome = run_scenario("secure-confirmation", protocol, AttackerModel::TypeIII, &dict, round).unwrap();
            assert_eq!(outcome.surviving, 64);
        }
    }
}

/// If the chain kept its last output as the next seed, the recorded ephemeral
/// would sit in card memory and a single transcript would pin the password.
#[test]
fn leaky_chain_would_break_the_group_protocols() {
    let dict = dict_with_truth(12);
    let pw = dict.true_password().unwrap().to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let (mut card, server) = provision(ProtocolId::Pscab, GroupConfig::mersenne61(), b"v", b"s", &pw, 0, &mut rng).unwrap();
    let before = match CardMemory::read(&card) {
        CardMemory::Pscab { rng, .. } => rng,
        _ => unreachable!(),
    };
    let transcript = run_in_memory(&mut card, &pw, &server, &mut rng).transcript();

    let honest = AttackerView {
        memory: Some(CardMemory::read(&card)),
        transcript: Some(transcript.clone()),
    };
    assert_eq!(offline_filter(&honest, &dict, consistent).surviving, 64);

    let mut replica = before.clone();
    let last_output = replica.next_block();
    let mut leaky = CardMemory::read(&card);
    if let CardMemory::Pscab { rng, .. } = &mut leaky {
        *rng = RngState::from_parts(last_output, *before.chain_key(), replica.counter());
    }
    let view = AttackerView {
        memory: Some(leaky),
        transcript: Some(transcript),
    };
    assert_eq!(offline_filter(&view, &dict, consistent).surviving_indices, vec![12]);
}

#[test]
fn online_scenarios_do_not_impersonate() {
    let dict = dict_with_truth(40);
    for protocol in ProtocolId::ALL {
        for scenario in ["replay", "mitm", "malicious-reader", "eavesdrop"] {
            let outcome = run_scenario(scenario, protocol, AttackerModel::TypeI, &dict, 6).unwrap();
            assert!(!outcome.impersonation, "{scenario} {protocol}");
            assert_eq!(outcome.scenario, scenario);
        }
    }
    let reader = run_scenario("malicious-reader", ProtocolId::Pscab, AttackerModel::TypeI, &dict, 6).unwrap();
    assert_eq!(reader.surviving_indices, vec![40]);
}

#[test]
fn type_ii_card_stops_answering_at_the_limit() {
    let dict = dict_with_truth(63);
    for protocol in ProtocolId::ALL {
        let outcome = run_scenario("stolen-card-query", protocol, AttackerModel::TypeII(16), &dict, 2).unwrap();
        assert_eq!(outcome.queries, 16);
        assert_eq!(outcome.surviving, 64 - 16);
        assert!(!outcome.impersonation);
        let outcome = run_scenario("counter-exhaustion", protocol, AttackerModel::TypeII(16), &dict, 2).unwrap();
        assert_eq!(outcome.queries, 16);
    }
}

#[test]
fn type_i_online_guessing_eventually_succeeds() {
    let dict = dict_with_truth(10);
    let outcome = run_scenario("stolen-card-query", ProtocolId::Pscav, AttackerModel::TypeI, &dict, 2).unwrap();
    assert!(outcome.impersonation);
    assert_eq!(outcome.queries, 11);
    assert_eq!(outcome.surviving_indices, vec![10]);
}

#[test]
fn memory_stick_models_cannot_query_a_card() {
    let err = run_scenario("stolen-card-query", ProtocolId::Pscab, AttackerModel::TypeIV, &dict_with_truth(0), 0);
    assert!(matches!(err, Err(Error::ModelMismatch { .. })));
}

#[test]
fn unknown_scenario_is_reported() {
    let err = run_scenario("side-channel", ProtocolId::Pscab, AttackerModel::TypeI, &dict_with_truth(0), 0);
    assert_eq!(err.unwrap_err(), Error::UnknownScenario("side-channel".into()));
}

#[test]
fn dictionary_without_the_password_can_empty_out() {
    let dict = Dictionary::default_fixture();
    let outcome = run_scenario("reversed-confirmation", ProtocolId::Pscav, AttackerModel::TypeIII, &dict, 1).unwrap();
    assert_eq!(outcome.surviving, 0);
    assert!(!outcome.true_password_present);
}

#[test]
fn single_word_dictionary_survives() {
    let dict = Dictionary::from_text("only\n").unwrap().with_true_index(0).unwrap();
    let outcome = run_scenario("stolen-card-read", ProtocolId::Ssca, AttackerModel::TypeIIIPrime, &dict, 0).unwrap();
    assert_eq!(outcome.surviving, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_filters_never_drop_the_real_password(seed in any::<u64>(), truth in 0usize..64,
                                                  pid in 1u8..=4, which in 0usize..4) {
        let protocol = ProtocolId::from_byte(pid).unwrap();
        let dict = dict_with_truth(truth);
        let (scenario, model) = [
            ("stolen-card-read", AttackerModel::TypeIII),
            ("stolen-card-read", AttackerModel::TypeIIIPrime),
            ("memory-stick", AttackerModel::TypeIV),
            ("eavesdrop", AttackerModel::TypeI),
        ][which];
        let outcome = run_scenario(scenario, protocol, model, &dict, seed).unwrap();
        prop_assert!(outcome.is_sound(&dict));
        prop_assert!(outcome.surviving >= 1 && outcome.surviving <= dict.len());
    }

    #[test]
    fn prop_scenarios_are_deterministic(seed in any::<u64>(), pid in 1u8..=4, which in 0usize..SCENARIOS.len()) {
        let protocol = ProtocolId::from_byte(pid).unwrap();
        let dict = dict_with_truth((seed % 64) as usize);
        let model = AttackerModel::TypeIII;
        let a = run_scenario(SCENARIOS[which], protocol, model, &dict, seed);
        let b = run_scenario(SCENARIOS[which], protocol, model, &dict, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn prop_reversed_attack_finds_the_real_password(seed in any::<u64>(), truth in 0usize..64) {
        let dict = dict_with_truth(truth);
        for protocol in [ProtocolId::Pscab, ProtocolId::Pscav] {
            let outcome = run_scenario("reversed-confirmation", protocol, AttackerModel::TypeIII, &dict, seed).unwrap();
            prop_assert_eq!(&outcome.surviving_indices, &vec![truth]);
        }
    }

    #[test]
    fn prop_type_ii_queries_never_exceed_limit(limit in 1u32..40, seed in any::<u64>()) {
        let dict = dict_with_truth(63);
        let outcome = run_scenario("counter-exhaustion", ProtocolId::Ssca, AttackerModel::TypeII(limit), &dict, seed).unwrap();
        prop_assert!(outcome.queries <= limit);
    }
}
