//! Deterministic synthetic stand-in for a top-1000 site list.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::rng_from;

pub const URL_LIST_LEN: usize = 1000;
/// Entries whose TLD is not `.com`, `.org` or `.net`.
pub const COUNTRY_CODE_ENTRIES: usize = 301;

const SYLLABLES: [&str; 32] = [
    "ba", "ko", "ri", "tel", "mon", "sa", "vi", "dra", "lu", "pen", "qui", "zo", "ta", "ne", "fa", "go", "li", "mar",
    "ost", "pi", "ru", "sen", "tor", "ul", "ven", "wi", "xa", "yor", "ze", "bi", "cor", "dun",
];

const GENERIC: [&str; 3] = ["com", "org", "net"];

const COUNTRY: [&str; 24] = [
    "co.uk", "de", "co.jp", "fr", "com.br", "ru", "in", "it", "es", "ca", "com.au", "nl", "pl", "cn", "co.kr",
    "se", "ch", "com.mx", "com.ar", "com.tr", "ie", "be", "at", "no",
];

fn hostname<R: Rng>(rng: &mut R, tld: &str) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(2..=4) {
        s.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
    }
    if rng.gen_bool(0.15) {
        s.push('-');
        s.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
    }
    if rng.gen_bool(0.1) {
        s.push(char::from(b'0' + rng.gen_range(0..10u8)));
    }
    s.push('.');
    s.push_str(tld);
    s
}

/// 1000 distinct hostnames ranked by list position; exactly 301 of them
/// end in a country-code TLD.
pub fn bundled_url_list() -> Vec<String> {
    let mut rng = rng_from(0x75726c73);
    let mut is_cc = alloc::vec![false; URL_LIST_LEN];
    is_cc[..COUNTRY_CODE_ENTRIES].iter_mut().for_each(|c| *c = true);
    is_cc.shuffle(&mut rng);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(URL_LIST_LEN);
    for cc in is_cc {
        loop {
            let tld = if cc {
                COUNTRY[rng.gen_range(0..COUNTRY.len())]
            } else {
                GENERIC[rng.gen_range(0..GENERIC.len())]
            };
            let h = hostname(&mut rng, tld);
            if seen.insert(h.clone()) {
                out.push(h);
                break;
            }
        }
    }
    out
}

/// True unless the hostname ends in `.com`, `.org` or `.net`.
pub fn is_country_code(host: &str) -> bool {
    !GENERIC.iter().any(|g| host.strip_suffix(g).is_some_and(|rest| rest.ends_with('.')))
}

/// The entries of `list` with a country-code TLD, in list order.
pub fn country_code_entries(list: &[String]) -> Vec<String> {
    list.iter().filter(|h| is_country_code(h)).cloned().collect()
}
