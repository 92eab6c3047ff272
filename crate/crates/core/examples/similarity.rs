//! Multiset arithmetic and the three similarity indices.
//!
//!     cargo run -p mmnn --example similarity

use mmnn::multiset::{ms_cardinality, ms_intersection, ms_union};
use mmnn::{coincidence, interiority, jaccard, FeatureVector, IntegerMultiset, SimilarityConfig};

fn main() -> mmnn::Result<()> {
    let x = IntegerMultiset::from_counts([('a', 3), ('b', 2)]);
    let y = IntegerMultiset::from_counts([('a', 1), ('b', 3), ('d', 1)]);
    let u = ms_union(&x, &y);
    let i = ms_intersection(&x, &y);
    println!("|X| = {}, |Y| = {}", ms_cardinality(&x), ms_cardinality(&y));
    println!("X ∪ Y = {:?}, |X ∪ Y| = {}", u.iter().collect::<Vec<_>>(), u.cardinality());
    println!("X ∩ Y = {:?}, |X ∩ Y| = {}", i.iter().collect::<Vec<_>>(), i.cardinality());

    // The same multisets as multiplicity vectors over (a, b, d).
    let labels = ['a', 'b', 'd'];
    let xv = FeatureVector::new(x.to_multiplicities(&labels))?;
    let yv = FeatureVector::new(y.to_multiplicities(&labels))?;
    for d in [1.0, 3.0, 5.0] {
        let cfg = SimilarityConfig::non_negative(d)?;
        println!(
            "D = {d}: J = {:.4}  I = {:.4}  C = {:.4}",
            jaccard(&xv, &yv, &cfg)?,
            interiority(&xv, &yv, &cfg)?,
            coincidence(&xv, &yv, &cfg)?
        );
    }

    let signed = SimilarityConfig::signed(3.0)?;
    let p = FeatureVector::new(vec![1.0, 2.0])?;
    let n = FeatureVector::new(vec![-1.0, -2.0])?;
    println!("signed, D = 3: C((1,2), (-1,-2)) = {}", coincidence(&p, &n, &signed)?);

    let zero = FeatureVector::new(vec![0.0, 0.0])?;
    match coincidence(&zero, &zero, &signed) {
        Err(e) => println!("two zero vectors: {e}"),
        Ok(v) => println!("two zero vectors: {v}"),
    }
    Ok(())
}
