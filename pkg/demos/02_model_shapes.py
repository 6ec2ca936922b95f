# Looking inside the joint model
#
# One shared encoder feeds two decoders in series. The dehazing decoder reads
# the deepest encoder stage through its learnable queries; the depth decoder
# reads the dehazing decoder's query-refined feature instead of the raw
# encoder output.

import torch

from hazedepth.config import toy_config
from hazedepth.decoders import JointModel

torch.manual_seed(0)
cfg = toy_config()
model = JointModel(cfg).eval()
print("parameters:", sum(p.numel() for p in model.parameters()))

x = torch.rand(1, 3, 128, 128)
with torch.no_grad():
    stem, pyramid = model.encoder(x)
    out = model(x)

# Every stage halves the resolution.
print("stem", tuple(stem.shape))
for i, feat in enumerate(pyramid, start=1):
    print(f"stage {i}", tuple(feat.shape))

print("dehazed", tuple(out.dehazed.shape), "range", float(out.dehazed.min()), float(out.dehazed.max()))
print("depth", tuple(out.depth.shape), "min", float(out.depth.min()))
print("query-refined feature", tuple(out.dehaze_feature.shape))

# Attention weights are distributions over keys, row by row.
w_query_to_feature, w_feature_to_query = model.dehaze_decoder.attention.last_attention
print("query->feature weights", tuple(w_query_to_feature.shape),
      "row sums within", float((w_query_to_feature.sum(-1) - 1).abs().max()))
print("feature->query weights", tuple(w_feature_to_query.shape))
