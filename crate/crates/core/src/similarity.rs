//! Character-level string similarity for picking the synonym closest to a mention.

use crate::kg::Entity;
use crate::scalar::Scalar;
use crate::text::Normalizer;

/// Levenshtein distance over Unicode scalar values (unit insert/delete/substitute).
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - d(norm a, norm b) / max(|norm a|, |norm b|)`, and 1 when both normalize to "".
pub fn similarity_with<F: Scalar>(a: &str, b: &str, norm: &Normalizer) -> F {
    let (a, b) = (norm.apply(a), norm.apply(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return F::one();
    }
    F::one() - F::of_usize(edit_distance(&a, &b)) / F::of_usize(longest)
}

pub fn similarity<F: Scalar>(a: &str, b: &str) -> F {
    similarity_with(a, b, &Normalizer::default())
}

/// Synonym of `entity` most similar to `mention`; ties go to the shorter
/// synonym, then the lexicographically smaller one.
pub fn select_target_synonym_with<'e>(
    mention: &str,
    entity: &'e Entity,
    norm: &Normalizer,
) -> &'e str {
    best_synonym(mention, entity, norm).0
}

pub fn select_target_synonym<'e>(mention: &str, entity: &'e Entity) -> &'e str {
    select_target_synonym_with(mention, entity, &Normalizer::default())
}

/// The selected synonym together with its similarity to `mention`.
pub(crate) fn best_synonym<'e>(
    mention: &str,
    entity: &'e Entity,
    norm: &Normalizer,
) -> (&'e str, f64) {
    entity
        .synonyms()
        .iter()
        .map(|s| (s.as_str(), similarity_with::<f64>(mention, s, norm)))
        .min_by(|(sa, a), (sb, b)| {
            b.total_cmp(a)
                .then_with(|| sa.chars().count().cmp(&sb.chars().count()))
                .then_with(|| sa.cmp(sb))
        })
        .expect("entities have at least one synonym")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityId;

    fn entity(names: &[&str]) -> Entity {
        Entity::new(
            EntityId::new("E").unwrap(),
            names[0],
            names[1..].iter().copied(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn distances() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("", "ab"), 2);
        assert_eq!(edit_distance("ab", ""), 2);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("tumour", "tumor"), 1);
        // counted in chars, not bytes
        assert_eq!(edit_distance("é", "e"), 1);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity::<f64>("MI", "mi"), 1.0);
        assert_eq!(similarity::<f64>("ab", "ax"), 0.5);
        assert_eq!(similarity::<f64>("", "x"), 0.0);
        assert_eq!(similarity::<f64>("", "  "), 1.0);
        assert_eq!(
            similarity_with::<f32>("MI", "mi", &Normalizer { fold_case: false }),
            0.0
        );
    }

    #[test]
    fn target_selection() {
        assert_eq!(
            select_target_synonym("MI", &entity(&["myocardial infarction", "MI"])),
            "MI"
        );
        assert_eq!(
            select_target_synonym("hart attack", &entity(&["cardiac arrest", "heart attack"])),
            "heart attack"
        );
        // "ab" and "ba" are both at distance 2 from "xy"; "ab" wins lexicographically over "ba"
        assert_eq!(
            select_target_synonym("xy", &entity(&["ba", "abc", "ab"])),
            "ab"
        );
    }
}
