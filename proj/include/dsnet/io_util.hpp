#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <system_error>

#include "dsnet/error.hpp"

namespace dsnet {

inline void warn(const std::string& msg) {
    std::cerr << "warning: " << msg << std::endl;
}

// Writes through a temp file committed by rename, so a crash or thrown
// exception never leaves a half-written artifact at the final path.
class AtomicFile {
public:
    explicit AtomicFile(std::string path)
        : final_(std::move(path)), tmp_(final_ + ".tmp") {
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot open " + tmp_ + " for writing");
    }

    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) throw IoError("write to " + tmp_ + " failed");
        out_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_, final_, ec);
        if (ec) {
            throw IoError("cannot move " + tmp_ + " to " + final_ + ": " +
                          ec.message());
        }
        committed_ = true;
    }

    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

private:
    std::string final_;
    std::string tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

inline void atomic_write_file(const std::string& path,
                              const std::string& contents) {
    AtomicFile f(path);
    f.stream().write(contents.data(),
                     static_cast<std::streamsize>(contents.size()));
    f.commit();
}

// One experiment at a time per output directory. The lock file is created
// with O_EXCL and removed when the guard goes out of scope; a stale lock
// left by a killed process must be deleted by hand.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::string& dir) {
        std::filesystem::create_directories(dir);
        path_ = (std::filesystem::path(dir) / ".dsnet.lock").string();
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw IoError("output directory '" + dir +
                          "' is in use by another run (lock file " + path_ +
                          " exists)");
        }
        ::close(fd);
    }

    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

    ~DirectoryLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

private:
    std::string path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    return contents;
}

}  // namespace dsnet
