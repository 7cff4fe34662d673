//! QuickXplain is generic over the consistency test. Here the "constraints"
//! are integers and a set is inconsistent when it covers one of a few
//! forbidden combinations.

use afm_doctor::quickxplain::{check_bound, quickxplain};

fn main() {
    let forbidden = [vec![3, 17], vec![5, 9, 30]];
    let consistent = |set: &[u32]| !forbidden.iter().any(|f| f.iter().all(|x| set.contains(x)));
    let candidates: Vec<u32> = (0..40).collect();

    let (conflict, stats) = quickxplain(&[], &candidates, consistent);
    println!("conflict {:?}", conflict.unwrap());
    println!("{} checks, bound {}", stats.checks, check_bound(stats.n, stats.k));

    // with 3 in the background only 17 is left to blame
    let rest: Vec<u32> = (0..40).filter(|x| *x != 3).collect();
    let (conflict, _) = quickxplain(&[3], &rest, consistent);
    println!("with background [3]: {:?}", conflict.unwrap());
}
