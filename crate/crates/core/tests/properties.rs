//! Property tests over randomly generated feature structures on the bundled
//! signature. The structures come from the seed-driven generators in
//! `lexcov::check`, so proptest shrinks over seeds.

use proptest::prelude::*;

use lexcov::check::{random_partial_fs, random_total_fs, Rng};
use lexcov::compile::{compile_text, CompiledLexicon, RunConfig};
use lexcov::featstruct::Fs;
use lexcov::grammar::BUNDLED_GRAMMAR;
use lexcov::signature::TypeId;

fn lexicon() -> &'static CompiledLexicon {
    use std::sync::OnceLock;
    static LEX: OnceLock<CompiledLexicon> = OnceLock::new();
    LEX.get_or_init(|| compile_text(BUNDLED_GRAMMAR, RunConfig::default()).unwrap())
}

fn word(lex: &CompiledLexicon) -> TypeId {
    lex.signature.type_by_name("word").unwrap()
}

fn partial(seed: u64) -> Fs {
    let lex = lexicon();
    random_partial_fs(&lex.signature, &mut Rng::new(seed), word(lex), 3)
}

proptest! {
    #[test]
    fn unification_is_commutative(sa in any::<u64>(), sb in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let (a, b) = (partial(sa), partial(sb));
        match (a.unify(&b, sig), b.unify(&a, sig)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.canonical_form(sig), y.canonical_form(sig)),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one direction failed"),
        }
    }

    #[test]
    fn unification_is_idempotent(seed in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let a = partial(seed);
        let aa = a.unify(&a, sig).expect("self-unification cannot clash");
        prop_assert_eq!(aa.canonical_form(sig), a.canonical_form(sig));
    }

    #[test]
    fn unification_is_associative(sa in any::<u64>(), sb in any::<u64>(), sc in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let (a, b, c) = (partial(sa), partial(sb), partial(sc));
        let left = a.unify(&b, sig).and_then(|x| x.unify(&c, sig)).ok();
        let right = b.unify(&c, sig).and_then(|y| a.unify(&y, sig)).ok();
        match (left, right) {
            (Some(x), Some(y)) => prop_assert_eq!(x.canonical_form(sig), y.canonical_form(sig)),
            (None, None) => {}
            _ => prop_assert!(false, "associativity broke on failure"),
        }
    }

    #[test]
    fn generalization_subsumes_both_sides(sa in any::<u64>(), sb in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let (a, b) = (partial(sa), partial(sb));
        let g = a.generalize(&b, sig);
        prop_assert!(g.subsumes(&a, sig));
        prop_assert!(g.subsumes(&b, sig));
        // Unifying the generalization back in changes nothing.
        prop_assert_eq!(
            g.unify(&a, sig).unwrap().canonical_form(sig),
            a.canonical_form(sig)
        );
    }

    #[test]
    fn subsumption_is_unify_absorption(sa in any::<u64>(), sb in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let (a, b) = (partial(sa), partial(sb));
        let subsumes = a.subsumes(&b, sig);
        let absorbs = a
            .unify(&b, sig)
            .map(|u| u.canonical_form(sig) == b.canonical_form(sig))
            .unwrap_or(false);
        prop_assert_eq!(subsumes, absorbs);
    }

    #[test]
    fn canonical_form_is_variant_identity(seed in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let a = partial(seed);
        // Round-tripping through text produces an alphabetic variant.
        let b = lexcov::grammar::parse_avm_text(sig, &a.render(sig)).unwrap();
        prop_assert_eq!(a.canonical_form(sig), b.canonical_form(sig));
        prop_assert!(a.subsumes(&b, sig) && b.subsumes(&a, sig));
    }

    #[test]
    fn derived_entries_stay_totally_well_typed(seed in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let entry = random_total_fs(sig, &mut Rng::new(seed), word(lex), 4);
        for rule in &lex.rules {
            for d in rule.apply(sig, &entry) {
                for (_, n) in d.enumerate_paths(0) {
                    let ty = d.node_type(n);
                    prop_assert!(sig.is_species(ty));
                    for &(f, restr) in sig.approp(ty) {
                        let t = d.arc_target(n, f);
                        prop_assert!(t.is_some(), "missing {}", sig.feat_name(f));
                        prop_assert!(sig.subtype(d.node_type(t.unwrap()), restr));
                    }
                }
            }
        }
    }

    #[test]
    fn species_resolution_members_behave(seed in any::<u64>()) {
        let lex = lexicon();
        let sig = &lex.signature;
        let fs = partial(seed);
        let paths = fs.enumerate_paths(0);
        let (p, _) = &paths[(seed % paths.len() as u64) as usize];
        for r in fs.species_resolutions(sig, std::slice::from_ref(p)) {
            prop_assert!(fs.subsumes(&r, sig));
            let n = r.get_path(p).unwrap();
            prop_assert!(sig.is_species(r.node_type(n)));
        }
    }
}
