from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    PFP_BUDGET_MB: int = 512
    PFP_DIMENSION_LIMIT: int = 2048
    PFP_MAX_WORKERS: int = 4

    PFP_LOG_LEVEL: str = "INFO"
    PFP_LOG_FILE: str | None = None

    class Config:
        env_file = ".env"
        extra = "allow"

    @property
    def budget_bytes(self) -> int:
        return self.PFP_BUDGET_MB * 1024 * 1024


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
