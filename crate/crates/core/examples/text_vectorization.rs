//! Turn raw text into keyword counts and drop all-zero instances.

use mida::io::{prune_bag, vectorize_text};
use mida::{KeywordVocabulary, UserBag};
use ndarray::Array2;

fn main() -> mida::Result<()> {
    let vocab = KeywordVocabulary::new(["fever", "rash", "headache", "sore"])?;
    let tweets = [
        "Got my flu shot today, arm is SORE and a bit of a rash",
        "fever fever fever. headache too",
        "lovely weather for a walk",
    ];
    let rows: Vec<Vec<u32>> = tweets.iter().map(|t| vectorize_text(t, &vocab)).collect();
    for (t, r) in tweets.iter().zip(&rows) {
        println!("{r:?}  {t}");
    }
    let counts = Array2::from_shape_vec((rows.len(), vocab.len()), rows.concat()).expect("rectangular");
    let bag = UserBag::new("someone", counts, 1)?;
    let kept = prune_bag(&bag);
    println!("{} of {} tweets carry a keyword", kept.n_instances(), bag.n_instances());
    Ok(())
}
