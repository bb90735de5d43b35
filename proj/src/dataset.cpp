#include "rrnet/dataset.hpp"

#include <map>
#include <sstream>

#include "rrnet/errors.hpp"

namespace rrnet {

namespace {

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::filesystem::path partition_sidecar_path(
    const std::filesystem::path& reconstruction_path) {
  std::string name = reconstruction_path.filename().string();
  const std::string suffix = ".recon.pgm";
  if (name.size() < suffix.size() ||
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw ValidationError("no partition sidecar convention for '" + name +
                          "' (expected a *.recon.pgm plane)");
  }
  name.replace(name.size() - suffix.size(), suffix.size(), ".partition.txt");
  return reconstruction_path.parent_path() / name;
}

DatasetBuildResult build_dataset(const std::vector<Frame>& images,
                                 const std::vector<int>& qps, int stride,
                                 const std::filesystem::path& out_dir,
                                 const CodecParams& params, bool lossless) {
  if (images.empty()) throw ValidationError("build_dataset: no images");
  if (qps.empty()) throw ValidationError("build_dataset: no qps");
  if (stride < 1) throw ValidationError("build_dataset: stride must be >= 1");

  DatasetBuildResult result;
  result.manifest.base_dir = out_dir;
  std::filesystem::create_directories(out_dir / "orig");

  int img_index = 0;
  for (const Frame& image : images) {
    if (image.width < kPatchSize || image.height < kPatchSize) {
      ++result.images_skipped;
      continue;
    }
    const std::string stem = "img_" + zero_pad(img_index, 3);
    const std::string orig_rel = "orig/" + stem + ".pgm";
    write_pgm(image, out_dir / orig_rel);
    for (int qp : qps) {
      const CodedTriple triple = encode_frame(image, qp, lossless, params);
      const std::string qp_dir = "qp" + zero_pad(qp, 2);
      const std::string recon_rel = qp_dir + "/" + stem + ".recon.pgm";
      const std::string resi_rel = qp_dir + "/" + stem + ".resi";
      write_pgm(triple.reconstruction, out_dir / recon_rel);
      write_resi(triple.residual, out_dir / resi_rel);
      write_partition(triple.partition,
                      partition_sidecar_path(out_dir / recon_rel));
      for (int y = 0; y + kPatchSize <= image.height; y += stride) {
        for (int x = 0; x + kPatchSize <= image.width; x += stride) {
          result.manifest.records.push_back(
              SampleRecord{orig_rel, recon_rel, resi_rel, qp, x, y});
        }
      }
    }
    ++img_index;
    ++result.images_used;
  }
  if (result.manifest.records.empty()) {
    throw ValidationError("build_dataset: every image was smaller than one patch");
  }
  write_manifest(result.manifest, out_dir / "manifest.tsv");
  return result;
}

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path) {
  std::ostringstream out;
  for (const SampleRecord& r : manifest.records) {
    out << r.original_path << '\t' << r.reconstruction_path << '\t'
        << r.residual_path << '\t' << r.qp << '\t' << r.x << '\t' << r.y
        << '\n';
  }
  write_file_atomic(path, out.str());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::istringstream in(read_file_bytes(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    SampleRecord r;
    std::string qp, x, y;
    if (!std::getline(fields, r.original_path, '\t') ||
        !std::getline(fields, r.reconstruction_path, '\t') ||
        !std::getline(fields, r.residual_path, '\t') ||
        !std::getline(fields, qp, '\t') || !std::getline(fields, x, '\t') ||
        !std::getline(fields, y)) {
      throw FormatError("manifest: " + path.string() + ":" +
                        std::to_string(line_no) + ": expected 6 tab-separated fields");
    }
    try {
      r.qp = std::stoi(qp);
      r.x = std::stoi(x);
      r.y = std::stoi(y);
    } catch (const std::exception&) {
      throw FormatError("manifest: " + path.string() + ":" +
                        std::to_string(line_no) + ": bad numeric field");
    }
    manifest.records.push_back(std::move(r));
  }
  if (manifest.records.empty()) {
    throw ValidationError("manifest: '" + path.string() + "' holds no records");
  }

  // validate referenced planes once per unique triple of paths
  std::map<std::string, std::pair<int, int>> dims;
  for (const SampleRecord& r : manifest.records) {
    if (r.x < 0 || r.y < 0) {
      throw ValidationError("manifest: negative patch origin");
    }
    const std::string key =
        r.original_path + "|" + r.reconstruction_path + "|" + r.residual_path;
    auto it = dims.find(key);
    if (it == dims.end()) {
      const Frame orig = read_pgm(manifest.base_dir / r.original_path);
      const Frame recon = read_pgm(manifest.base_dir / r.reconstruction_path);
      const PlaneI16 resi = read_resi(manifest.base_dir / r.residual_path);
      if (!orig.same_dims(recon) || orig.width != resi.width ||
          orig.height != resi.height) {
        throw ValidationError("manifest: planes of '" + r.original_path +
                              "' disagree on dimensions");
      }
      if (orig.width < manifest.patch_size || orig.height < manifest.patch_size) {
        throw ValidationError("manifest: '" + r.original_path +
                              "' is smaller than one patch");
      }
      it = dims.emplace(key, std::make_pair(orig.width, orig.height)).first;
    }
    if (r.x + manifest.patch_size > it->second.first ||
        r.y + manifest.patch_size > it->second.second) {
      throw ValidationError("manifest: patch origin (" + std::to_string(r.x) +
                            "," + std::to_string(r.y) + ") overruns '" +
                            r.original_path + "'");
    }
  }
  return manifest;
}

DatasetManifest filter_by_qp(const DatasetManifest& manifest, int qp) {
  DatasetManifest out;
  out.base_dir = manifest.base_dir;
  out.patch_size = manifest.patch_size;
  for (const SampleRecord& r : manifest.records) {
    if (r.qp == qp) out.records.push_back(r);
  }
  return out;
}

}  // namespace rrnet
