import pytest
import torch


VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "cat", "sat", "on", "mat", "run", "##ning", "##s",
    "un", "##believ", "##able", "a", "b", "##a", "##b",
]


@pytest.fixture(scope="session")
def tiny_tokenizer(tmp_path_factory):
    from transformers import BertTokenizer

    vocab_file = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    return BertTokenizer(str(vocab_file), do_lower_case=True)


@pytest.fixture(scope="session")
def tiny_model():
    from transformers import BertConfig, BertModel

    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=24,
        output_hidden_states=True,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.eval()
    return model
