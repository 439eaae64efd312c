"""
FastAPI backend for rmdgraph
Main application entry point
"""
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

import app as rmdgraph
from app.api.routers import experiments, theory
from app.core.config import configure_logging, get_settings
from app.core.database import init_db

configure_logging()


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Initialize database on startup"""
    init_db()
    yield


app = FastAPI(
    title="rmdgraph API",
    description="Rank-modulated degree graphs: experiment runs and closed-form limits",
    version=rmdgraph.__version__,
    lifespan=lifespan,
)

# CORS is only enabled when origins are configured
allowed_origins = get_settings().cors_origins
if allowed_origins:
    app.add_middleware(
        CORSMiddleware,
        allow_origins=allowed_origins,
        allow_credentials=True,
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["Content-Type", "Accept", "Origin"],
        max_age=600,
    )

# Include routers
app.include_router(experiments.router)
app.include_router(theory.router)


@app.get("/")
async def root():
    """Health check endpoint"""
    return {
        "status": "ok",
        "message": "rmdgraph API is running",
        "version": rmdgraph.__version__
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy"}


if __name__ == "__main__":
    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=8000,
        reload=True
    )
