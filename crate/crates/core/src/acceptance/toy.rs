//! Fixed ten-pair corpus for the memorization check: five sports and five
//! finance stories.

use crate::corpus::DocumentPair;

const TOY: [(&str, &str); 10] = [
    (
        "the home team won the final match after a late goal from the young striker .",
        "home team won final",
    ),
    (
        "the coach praised the players after the team scored twice in the second half .",
        "coach praised players",
    ),
    (
        "fans filled the stadium as the league leaders beat their old rivals at home .",
        "leaders beat rivals",
    ),
    (
        "the goalkeeper saved a penalty and the match ended in a draw after extra time .",
        "goalkeeper saved penalty",
    ),
    (
        "the striker signed a new contract with the club before the season started .",
        "striker signed contract",
    ),
    (
        "the central bank raised interest rates to slow rising prices across the economy .",
        "bank raised rates",
    ),
    (
        "shares fell sharply on the market after the company reported weak profits .",
        "shares fell after weak profits",
    ),
    (
        "investors bought bonds as inflation fears grew and the currency lost value .",
        "investors bought bonds",
    ),
    (
        "the firm announced record profits and said it would pay a larger dividend .",
        "firm announced record profits",
    ),
    (
        "the government cut taxes on small business to support growth in the economy .",
        "government cut taxes",
    ),
];

pub fn toy_corpus() -> Vec<DocumentPair> {
    TOY.iter()
        .enumerate()
        .map(|(i, (a, s))| DocumentPair::from_text(format!("toy{i}"), a, s))
        .collect()
}
