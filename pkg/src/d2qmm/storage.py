"""On-disk index format.

A directory holding a versioned JSON header plus four binary sections:

    header.json   format version, tokenizer config, BM25 params, corpus
                  stats, and a sha256 checksum of every section
    doctable.bin  per document: doc_id and token length
    lexicon.bin   per term (sorted): df, block count, section offsets
    postings.bin  per term: delta-gapped ordinals with term frequencies
    blockmax.bin  per term: per block, last ordinal and max partial score

All integers are little-endian fixed-width; terms and doc_ids are UTF-8
with a u32 length prefix. Postings are uncompressed in format version 1,
but the delta-gap layout is the seam where codec compression can be added
without breaking the format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

from d2qmm.analysis import TokenizerConfig
from d2qmm.errors import IndexIntegrityError
from d2qmm.index import InvertedIndex, PostingList
from d2qmm.scoring import Bm25Params

FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_POSTING = struct.Struct("<II")
_BLOCK = struct.Struct("<Id")


def _serialize_sections(index: InvertedIndex) -> dict[str, bytes]:
    doctable = bytearray()
    for doc_id, dl in zip(index.doc_ids, index.doc_lengths):
        raw = doc_id.encode("utf-8")
        doctable += _U32.pack(len(raw)) + raw + _U32.pack(dl)

    lexicon = bytearray()
    postings = bytearray()
    blockmax = bytearray()
    for term in sorted(index.postings):
        plist = index.postings[term]
        raw = term.encode("utf-8")
        lexicon += _U32.pack(len(raw)) + raw
        lexicon += _U32.pack(plist.df)
        lexicon += _U64.pack(len(postings))
        lexicon += _U32.pack(len(plist.block_lasts))
        lexicon += _U64.pack(len(blockmax))
        prev = 0
        for i, (ord_, tf) in enumerate(zip(plist.doc_ords, plist.tfs)):
            gap = ord_ if i == 0 else ord_ - prev
            postings += _POSTING.pack(gap, tf)
            prev = ord_
        for last, bmax in zip(plist.block_lasts, plist.block_maxes):
            blockmax += _BLOCK.pack(last, bmax)

    return {
        "doctable.bin": bytes(doctable),
        "lexicon.bin": bytes(lexicon),
        "postings.bin": bytes(postings),
        "blockmax.bin": bytes(blockmax),
    }


def _header(index: InvertedIndex, sections: dict[str, bytes]) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "bm25": {"k1": index.params.k1, "b": index.params.b},
        "tokenizer": {
            "remove_stopwords": index.tokenizer.remove_stopwords,
            "stem": index.tokenizer.stem,
            "stopword_list": sorted(index.tokenizer.stopword_list),
        },
        "block_size": index.block_size,
        "doc_count": index.doc_count,
        "avgdl": index.avgdl,
        "total_tokens": index.total_tokens,
        "checksums": {
            name: hashlib.sha256(data).hexdigest() for name, data in sections.items()
        },
    }
    return (json.dumps(header, sort_keys=True, indent=2) + "\n").encode("utf-8")


def save_index(index: InvertedIndex, directory: str | Path) -> None:
    """Write the index as a directory; byte-identical for identical input."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sections = _serialize_sections(index)
    for name, data in sections.items():
        (directory / name).write_bytes(data)
    (directory / "header.json").write_bytes(_header(index, sections))


def index_size_bytes(index: InvertedIndex) -> int:
    """Serialized size of all index structures, header included."""
    sections = _serialize_sections(index)
    return sum(len(data) for data in sections.values()) + len(_header(index, sections))


def load_index(directory: str | Path) -> InvertedIndex:
    """Read an index directory, verifying version and section checksums."""
    directory = Path(directory)
    try:
        header = json.loads((directory / "header.json").read_text("utf-8"))
    except FileNotFoundError:
        raise IndexIntegrityError(f"{directory} has no header.json")
    if header.get("format_version") != FORMAT_VERSION:
        raise IndexIntegrityError(
            f"unsupported index format version {header.get('format_version')!r}"
        )
    sections: dict[str, bytes] = {}
    for name, expected in header["checksums"].items():
        data = (directory / name).read_bytes()
        actual = hashlib.sha256(data).hexdigest()
        if actual != expected:
            raise IndexIntegrityError(f"checksum mismatch in {name}")
        sections[name] = data

    tok = header["tokenizer"]
    tokenizer = TokenizerConfig(
        remove_stopwords=tok["remove_stopwords"],
        stem=tok["stem"],
        stopword_list=frozenset(tok["stopword_list"]),
    )
    params = Bm25Params(k1=header["bm25"]["k1"], b=header["bm25"]["b"])

    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    data = sections["doctable.bin"]
    off = 0
    for _ in range(header["doc_count"]):
        (id_len,) = _U32.unpack_from(data, off)
        off += 4
        doc_ids.append(data[off : off + id_len].decode("utf-8"))
        off += id_len
        (dl,) = _U32.unpack_from(data, off)
        off += 4
        doc_lengths.append(dl)

    postings: dict[str, PostingList] = {}
    lex = sections["lexicon.bin"]
    post = sections["postings.bin"]
    bmx = sections["blockmax.bin"]
    off = 0
    while off < len(lex):
        (term_len,) = _U32.unpack_from(lex, off)
        off += 4
        term = lex[off : off + term_len].decode("utf-8")
        off += term_len
        (df,) = _U32.unpack_from(lex, off)
        off += 4
        (post_off,) = _U64.unpack_from(lex, off)
        off += 8
        (n_blocks,) = _U32.unpack_from(lex, off)
        off += 4
        (bmx_off,) = _U64.unpack_from(lex, off)
        off += 8

        doc_ords: list[int] = []
        tfs: list[int] = []
        prev = 0
        for i in range(df):
            gap, tf = _POSTING.unpack_from(post, post_off + i * _POSTING.size)
            ord_ = gap if i == 0 else prev + gap
            doc_ords.append(ord_)
            tfs.append(tf)
            prev = ord_
        block_lasts: list[int] = []
        block_maxes: list[float] = []
        for i in range(n_blocks):
            last, bmax = _BLOCK.unpack_from(bmx, bmx_off + i * _BLOCK.size)
            block_lasts.append(last)
            block_maxes.append(bmax)
        postings[term] = PostingList(
            doc_ords=doc_ords,
            tfs=tfs,
            block_lasts=block_lasts,
            block_maxes=block_maxes,
            max_score=max(block_maxes) if block_maxes else 0.0,
        )

    index = InvertedIndex(
        params=params,
        tokenizer=tokenizer,
        block_size=header["block_size"],
        doc_ids=doc_ids,
        doc_lengths=doc_lengths,
        postings=postings,
        total_tokens=header["total_tokens"],
    )
    if index.doc_count and abs(index.avgdl - header["avgdl"]) > 1e-9:
        raise IndexIntegrityError("header avgdl inconsistent with doc table")
    return index
