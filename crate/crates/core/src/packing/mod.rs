//! Byte-level tokenization and packing of author streams into training
//! instances: author-context windows, independent documents, and
//! target-framed task instances.

mod instance;
mod io;
mod pack;
mod tokenizer;

pub use instance::{next_token_mask, DocumentSpan, PackedInstance};
pub use io::{decode_binary, encode_binary, read_binary, read_jsonl, write_binary, write_jsonl};
pub use pack::{
    locate_pool_positions, locate_pool_positions_with, pack_author, pack_author_with,
    pack_for_task, pack_independent, pack_independent_with, unpack_documents, LastTokenPolicy, PackOptions,
    PoolPositions, TaskTarget, FINETUNE_MAX_LEN, PRETRAIN_AUTHOR_MAX_LEN,
    PRETRAIN_INDEPENDENT_MAX_LEN,
};
pub use tokenizer::{detokenize, is_special, tokenize, TokenId, BOS, EOS, PAD, VOCAB_SIZE};
