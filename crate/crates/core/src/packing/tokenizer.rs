//! Byte-level tokenizer: one token per UTF-8 byte plus three specials.

pub type TokenId = u32;

pub const PAD: TokenId = 256;
pub const EOS: TokenId = 257;
pub const BOS: TokenId = 258;
pub const VOCAB_SIZE: usize = 259;

pub fn is_special(t: TokenId) -> bool {
    t >= 256
}

pub fn tokenize(text: &str) -> Vec<TokenId> {
    text.bytes().map(TokenId::from).collect()
}

/// Inverse of [`tokenize`]; specials are skipped and invalid UTF-8 is
/// replaced lossily.
pub fn detokenize(tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter(|&&t| !is_special(t))
        .map(|&t| t as u8)
        .collect();
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bytes() {
        assert_eq!(tokenize("ab"), vec![97, 98]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("é"), vec![0xc3, 0xa9]);
    }

    #[test]
    fn specials_skipped() {
        assert_eq!(detokenize(&[104, EOS, 105, PAD]), "hi");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(s in any::<String>()) {
            prop_assert_eq!(detokenize(&tokenize(&s)), s);
        }
    }
}
