//! Reversible byte <-> printable character mapping used by byte-level BPE
//! vocabularies, so every token is a whitespace-free string.

use std::sync::OnceLock;

struct Tables {
    encode: [char; 256],
    decode: std::collections::HashMap<char, u8>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut encode = ['\0'; 256];
        let printable = |b: u32| (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b);
        let mut next = 256u32;
        for b in 0..256u32 {
            encode[b as usize] = if printable(b) {
                char::from_u32(b).unwrap()
            } else {
                let c = char::from_u32(next).unwrap();
                next += 1;
                c
            };
        }
        let decode = encode.iter().enumerate().map(|(b, c)| (*c, b as u8)).collect();
        Tables { encode, decode }
    })
}

pub fn byte_to_char(b: u8) -> char {
    tables().encode[b as usize]
}

pub fn char_to_byte(c: char) -> Option<u8> {
    tables().decode.get(&c).copied()
}

pub fn bytes_to_token(bytes: &[u8]) -> String {
    bytes.iter().map(|b| byte_to_char(*b)).collect()
}

/// `None` if the string contains a character outside the mapping.
pub fn token_to_bytes(token: &str) -> Option<Vec<u8>> {
    token.chars().map(char_to_byte).collect()
}
